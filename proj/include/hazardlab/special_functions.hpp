#pragma once

// Scalar special functions used by the survival distributions and the
// test statistics. All functions are pure; invalid arguments raise
// std::domain_error.

namespace hazardlab {

/// ln Γ(k) for real k > 0 (Lanczos, g = 7).
double ln_gamma(double k);

/// P(k, x) = γ(k, x) / Γ(k), the regularized lower incomplete gamma function.
double reg_lower_incomplete_gamma(double k, double x);

/// Q(k, x) = 1 - P(k, x), evaluated directly so the upper tail keeps full
/// relative precision.
double reg_upper_incomplete_gamma(double k, double x);

/// ln Q(k, x). Stays finite long after Q itself underflows.
double log_reg_upper_incomplete_gamma(double k, double x);

double std_normal_pdf(double z);
double std_normal_cdf(double z);

/// ln(1 - Φ(z)), accurate for large positive z.
double std_normal_log_sf(double z);

/// Φ⁻¹(p) for p in (0, 1).
double std_normal_quantile(double p);

/// Upper tail probability of χ²(df) at x.
double chi_square_sf(double x, double df);

/// Two-tailed p-value of a Student-t statistic with df degrees of freedom.
double student_t_two_tail(double t, double df);

/// Quantile of Student's t with df degrees of freedom.
double student_t_quantile(double p, double df);

}  // namespace hazardlab
