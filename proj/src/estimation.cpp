#include "hazardlab/estimation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "hazardlab/special_functions.hpp"

namespace hazardlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEulerGamma = 0.57721566490153286061;
constexpr double kInitialTheta = 0.1;
constexpr double kLnThetaFloor = -20.0;
constexpr int kMaxHalvings = 20;
constexpr double kGradStep = 1e-5;
constexpr double kHessStep = 1e-4;
constexpr const char* kIntercept = "_cons";

// Parameter layout of a spec resolved against a data set.
struct Layout {
  const ModelSpec* spec = nullptr;
  bool cox = false;
  Family family = Family::Exponential;
  std::vector<Eigen::Index> x_cols;
  std::vector<std::vector<Eigen::Index>> z_cols;  // per ancillary
  int n_beta = 0;
  std::vector<int> anc_offset;  // start of each ancillary block in the flat vector
  int n_anc = 0;
  bool has_theta = false;
  int total = 0;
  int n_scalars = 0;  // eta, one per ancillary, ln theta
  double eta_sign = 1.0;
};

int ancillary_block_size(const ModelSpec& spec, int j) {
  const bool linked = j < static_cast<int>(spec.ancillary_covariates.size());
  return 1 + (linked ? static_cast<int>(spec.ancillary_covariates[j].size()) : 0);
}

Layout make_layout(const ModelSpec& spec, const SurvivalData* data) {
  spec.validate();
  Layout L;
  L.spec = &spec;
  L.cox = spec.is_cox();
  if (!L.cox) L.family = *spec.family;
  if (data) {
    for (const auto& name : spec.covariates) L.x_cols.push_back(data->column(name));
  }
  L.n_beta = (L.cox ? 0 : 1) + static_cast<int>(spec.covariates.size());
  int offset = L.n_beta;
  const int m = L.cox ? 0 : ancillary_arity(L.family);
  L.z_cols.resize(m);
  for (int j = 0; j < m; ++j) {
    L.anc_offset.push_back(offset);
    const int size = ancillary_block_size(spec, j);
    if (data && size > 1) {
      for (const auto& name : spec.ancillary_covariates[j]) L.z_cols[j].push_back(data->column(name));
    }
    offset += size;
    L.n_anc += size;
  }
  L.has_theta = spec.frailty != Frailty::None;
  L.total = offset + (L.has_theta ? 1 : 0);
  L.n_scalars = 1 + m + (L.has_theta ? 1 : 0);
  L.eta_sign = spec.rate_link ? -1.0 : 1.0;
  return L;
}

bool analytic_exponential(const Layout& L) {
  return !L.cox && L.family == Family::Exponential && !L.has_theta;
}

// Per-spell scalar arguments (eta, log ancillaries, ln theta) at a flat parameter vector.
void spell_scalars(const Layout& L, const SurvivalData& data, const Eigen::VectorXd& theta,
                   Eigen::Index i, double* u) {
  double eta = theta(0);
  for (std::size_t c = 0; c < L.x_cols.size(); ++c) {
    eta += theta(1 + c) * data.covariates(i, L.x_cols[c]);
  }
  u[0] = L.eta_sign * eta;
  for (std::size_t j = 0; j < L.z_cols.size(); ++j) {
    const int off = L.anc_offset[j];
    double z = theta(off);
    for (std::size_t c = 0; c < L.z_cols[j].size(); ++c) {
      z += theta(off + 1 + c) * data.covariates(i, L.z_cols[j][c]);
    }
    u[1 + j] = z;
  }
  if (L.has_theta) u[L.n_scalars - 1] = theta(L.total - 1);
}

// Jacobian of the per-spell scalars with respect to the flat parameter vector.
void scalar_jacobian(const Layout& L, const SurvivalData& data, Eigen::Index i,
                     Eigen::MatrixXd& J) {
  J.setZero(L.n_scalars, L.total);
  J(0, 0) = L.eta_sign;
  for (std::size_t c = 0; c < L.x_cols.size(); ++c) {
    J(0, 1 + c) = L.eta_sign * data.covariates(i, L.x_cols[c]);
  }
  for (std::size_t j = 0; j < L.z_cols.size(); ++j) {
    const int off = L.anc_offset[j];
    J(1 + j, off) = 1.0;
    for (std::size_t c = 0; c < L.z_cols[j].size(); ++c) {
      J(1 + j, off + 1 + c) = data.covariates(i, L.z_cols[j][c]);
    }
  }
  if (L.has_theta) J(L.n_scalars - 1, L.total - 1) = 1.0;
}

struct LogHazard {
  double log_hazard;
  double cum_hazard;
};

// Conditional (frailty-free) log hazard and cumulative hazard at t.
LogHazard conditional_terms(const Layout& L, double t, const double* u) {
  const double eta = u[0];
  const int m = static_cast<int>(L.z_cols.size());
  const std::span<const double> anc(u + 1, m);
  if (L.spec->metric == Metric::AFT) {
    const HazardTerms h = baseline_terms(L.family, t * std::exp(-eta), anc);
    return {h.log_hazard - eta, h.cum_hazard};
  }
  const HazardTerms h = baseline_terms(L.family, t, anc);
  return {h.log_hazard + eta, h.cum_hazard * std::exp(eta)};
}

// Frailty-marginal log hazard and cumulative hazard.
LogHazard marginal_terms(const Layout& L, double t, const double* u) {
  LogHazard c = conditional_terms(L, t, u);
  if (!L.has_theta) return c;
  const double th = std::exp(u[L.n_scalars - 1]);
  const double cum = c.cum_hazard;
  if (L.spec->frailty == Frailty::Gamma) {
    const double l1p = std::log1p(th * cum);
    return {c.log_hazard - l1p, l1p / th};
  }
  const double root = std::sqrt(1.0 + 2.0 * th * cum);
  return {c.log_hazard - std::log(root), 2.0 * cum / (1.0 + root)};
}

double spell_loglik(const Layout& L, double t, int d, const double* u) {
  const LogHazard m = marginal_terms(L, t, u);
  return (d ? m.log_hazard : 0.0) - m.cum_hazard;
}

// Derivatives of one spell's log-likelihood with respect to its scalars.
void spell_derivatives(const Layout& L, double t, int d, const double* u, double* g, double* H) {
  const int s = L.n_scalars;
  if (analytic_exponential(L)) {
    const double sign = L.spec->metric == Metric::AFT ? -1.0 : 1.0;
    const double risk = t * std::exp(sign * u[0]);
    g[0] = sign * (d - risk);
    H[0] = -risk;
    return;
  }
  std::array<double, 4> v{};
  std::copy(u, u + s, v.begin());
  auto f = [&]() { return spell_loglik(L, t, d, v.data()); };
  const double f0 = f();
  std::array<double, 4> hg{}, hh{};
  for (int a = 0; a < s; ++a) {
    hg[a] = kGradStep * std::max(1.0, std::abs(u[a]));
    hh[a] = kHessStep * std::max(1.0, std::abs(u[a]));
  }
  for (int a = 0; a < s; ++a) {
    v[a] = u[a] + hg[a];
    const double fp = f();
    v[a] = u[a] - hg[a];
    const double fm = f();
    g[a] = (fp - fm) / (2.0 * hg[a]);
    v[a] = u[a] + hh[a];
    const double fpp = f();
    v[a] = u[a] - hh[a];
    const double fmm = f();
    v[a] = u[a];
    H[a * s + a] = (fpp - 2.0 * f0 + fmm) / (hh[a] * hh[a]);
  }
  for (int a = 0; a < s; ++a) {
    for (int b = a + 1; b < s; ++b) {
      double acc = 0.0;
      for (int sa : {1, -1}) {
        for (int sb : {1, -1}) {
          v[a] = u[a] + sa * hh[a];
          v[b] = u[b] + sb * hh[b];
          acc += sa * sb * f();
        }
      }
      v[a] = u[a];
      v[b] = u[b];
      H[a * s + b] = H[b * s + a] = acc / (4.0 * hh[a] * hh[b]);
    }
  }
}

// Returns NaN instead of throwing; `bad` receives the first offending spell.
double parametric_loglik(const Layout& L, const SurvivalData& data, const Eigen::VectorXd& theta,
                         Eigen::Index* bad = nullptr) {
  std::array<double, 4> u{};
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    spell_scalars(L, data, theta, i, u.data());
    const double li = spell_loglik(L, data.time[i], data.event[i], u.data());
    if (!std::isfinite(li)) {
      if (bad) *bad = i;
      return kNaN;
    }
    total += li;
  }
  return total;
}

// --- Cox partial likelihood --------------------------------------------------

struct CoxPass {
  double loglik = 0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  Eigen::MatrixXd score_residuals;  // n x p, when requested
  Eigen::VectorXd cum_hazard;       // n, when requested
  std::vector<Eigen::Index> death_rows;
  std::vector<double> death_times;
  Eigen::MatrixXd schoenfeld;  // deaths x p, when requested
};

struct CoxDesign {
  Eigen::MatrixXd x;  // centered covariates
  Eigen::VectorXd center;
};

CoxDesign cox_design(const Layout& L, const SurvivalData& data) {
  CoxDesign D;
  const auto p = static_cast<Eigen::Index>(L.x_cols.size());
  D.x.resize(data.n(), p);
  for (Eigen::Index c = 0; c < p; ++c) D.x.col(c) = data.covariates.col(L.x_cols[c]);
  D.center = D.x.colwise().mean().transpose();
  D.x.rowwise() -= D.center.transpose();
  return D;
}

CoxPass cox_pass(const SurvivalData& data, const CoxDesign& D, const Eigen::VectorXd& beta,
                 Ties ties, bool residuals) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = beta.size();
  CoxPass out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.hessian = Eigen::MatrixXd::Zero(p, p);

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return data.time[a] < data.time[b]; });
  const Eigen::VectorXd eta = D.x * beta;
  const Eigen::VectorXd w = eta.array().exp();

  // Groups of equal time in ascending order: [begin, end) into `order`.
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t a = 0; a < order.size();) {
    std::size_t b = a;
    while (b < order.size() && data.time[order[b]] == data.time[order[a]]) ++b;
    groups.emplace_back(a, b);
    a = b;
  }
  const std::size_t G = groups.size();
  std::vector<double> a_full(G, 0.0), a_death(G, 0.0);
  Eigen::MatrixXd b_full = Eigen::MatrixXd::Zero(p, G), b_death = Eigen::MatrixXd::Zero(p, G);
  Eigen::MatrixXd mean_xbar = Eigen::MatrixXd::Zero(p, G);

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t gi = G; gi-- > 0;) {
    const auto [begin, end] = groups[gi];
    double d0 = 0.0;
    Eigen::VectorXd d1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(p, p);
    int deaths = 0;
    for (std::size_t k = begin; k < end; ++k) {
      const Eigen::Index i = order[k];
      const Eigen::VectorXd xi = D.x.row(i).transpose();
      s0 += w(i);
      s1 += w(i) * xi;
      s2.noalias() += w(i) * xi * xi.transpose();
      if (data.event[i]) {
        ++deaths;
        d0 += w(i);
        d1 += w(i) * xi;
        d2.noalias() += w(i) * xi * xi.transpose();
        out.loglik += eta(i);
        out.gradient += xi;
      }
    }
    for (int r = 0; r < deaths; ++r) {
      const double c = ties == Ties::Efron ? static_cast<double>(r) / deaths : 0.0;
      const double s0r = s0 - c * d0;
      const Eigen::VectorXd s1r = s1 - c * d1;
      const Eigen::VectorXd xbar = s1r / s0r;
      out.loglik -= std::log(s0r);
      out.gradient -= xbar;
      out.hessian -= (s2 - c * d2) / s0r - xbar * xbar.transpose();
      a_full[gi] += 1.0 / s0r;
      b_full.col(gi) += xbar / s0r;
      a_death[gi] += (1.0 - c) / s0r;
      b_death.col(gi) += (1.0 - c) * xbar / s0r;
      mean_xbar.col(gi) += xbar / deaths;
    }
  }
  if (!residuals) return out;

  out.score_residuals = Eigen::MatrixXd::Zero(n, p);
  out.cum_hazard = Eigen::VectorXd::Zero(n);
  double cum_a = 0.0;
  Eigen::VectorXd cum_b = Eigen::VectorXd::Zero(p);
  std::vector<Eigen::VectorXd> sch;
  for (std::size_t gi = 0; gi < G; ++gi) {
    const auto [begin, end] = groups[gi];
    for (std::size_t k = begin; k < end; ++k) {
      const Eigen::Index i = order[k];
      const Eigen::VectorXd xi = D.x.row(i).transpose();
      if (data.event[i]) {
        const double a = cum_a + a_death[gi];
        const Eigen::VectorXd b = cum_b + b_death.col(gi);
        const Eigen::VectorXd sres = xi - mean_xbar.col(gi);
        out.score_residuals.row(i) = (sres - w(i) * (xi * a - b)).transpose();
        out.cum_hazard(i) = w(i) * a;
        out.death_rows.push_back(i);
        out.death_times.push_back(data.time[i]);
        sch.push_back(sres);
      } else {
        const double a = cum_a + a_full[gi];
        const Eigen::VectorXd b = cum_b + b_full.col(gi);
        out.score_residuals.row(i) = (-w(i) * (xi * a - b)).transpose();
        out.cum_hazard(i) = w(i) * a;
      }
    }
    cum_a += a_full[gi];
    cum_b += b_full.col(gi);
  }
  out.schoenfeld.resize(static_cast<Eigen::Index>(sch.size()), p);
  for (std::size_t k = 0; k < sch.size(); ++k) out.schoenfeld.row(k) = sch[k].transpose();
  return out;
}

// --- optimizer ---------------------------------------------------------------

struct Objective {
  std::function<double(const Eigen::VectorXd&)> value;  // NaN when not finite
  std::function<ScoreHessian(const Eigen::VectorXd&)> derivatives;
};

struct NewtonOutcome {
  Eigen::VectorXd theta;
  double value = 0;
  ScoreHessian last;
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<Eigen::Index> free;
};

bool finite_matrix(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Parameters held at their lower bound are dropped from the Newton system.
std::vector<Eigen::Index> free_set(const Eigen::VectorXd& theta, const Eigen::VectorXd& gradient,
                                   const Eigen::VectorXd& lower) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const bool pinned = theta(j) <= lower(j) && gradient(j) <= 0.0;
    if (!pinned) free.push_back(j);
  }
  return free;
}

Eigen::MatrixXd sub(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = m(idx[a], idx[b]);
  }
  return out;
}

NewtonOutcome newton_raphson(const Objective& obj, Eigen::VectorXd theta, const FitOptions& opt,
                             const Eigen::VectorXd& lower) {
  NewtonOutcome out;
  double value = obj.value(theta);
  if (!std::isfinite(value)) {
    throw EstimationError("log-likelihood is not finite at the starting values");
  }
  for (int it = 1;; ++it) {
    ScoreHessian sh = obj.derivatives(theta);
    if (!sh.gradient.allFinite() || !finite_matrix(sh.hessian)) throw SingularHessianError(it);
    const auto free = free_set(theta, sh.gradient, lower);
    Eigen::VectorXd g(free.size());
    for (std::size_t a = 0; a < free.size(); ++a) g(a) = sh.gradient(free[a]);
    const Eigen::MatrixXd h = sub(sh.hessian, free);
    const Eigen::MatrixXd neg = -0.5 * (h + h.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(neg);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double scale = ev.cwiseAbs().maxCoeff();
    if (!(scale > 0.0) || ev.cwiseAbs().minCoeff() <= 1e-15 * scale) {
      throw SingularHessianError(it);
    }
    const double gmax = g.cwiseAbs().maxCoeff();
    out.last = sh;
    out.free = free;
    if (gmax <= opt.tolerance && ev.minCoeff() > 0.0) {
      out.converged = true;
      out.iterations = it - 1;
      break;
    }
    if (it > opt.max_iterations) {
      out.iterations = it - 1;
      out.message = "maximum of " + std::to_string(opt.max_iterations) +
                    " iterations reached (gradient max-norm " + std::to_string(gmax) + ")";
      break;
    }
    // Eigenvalue-modified Newton direction: negative curvature is flipped.
    const Eigen::VectorXd inv = ev.cwiseAbs().cwiseInverse();
    const Eigen::VectorXd dfree =
        eig.eigenvectors() * inv.asDiagonal() * (eig.eigenvectors().transpose() * g);
    Eigen::VectorXd step = Eigen::VectorXd::Zero(theta.size());
    for (std::size_t a = 0; a < free.size(); ++a) step(free[a]) = dfree(a);
    bool accepted = false;
    double factor = 1.0;
    const double slack = 1e-12 * (1.0 + std::abs(value));
    for (int k = 0; k <= kMaxHalvings; ++k, factor *= 0.5) {
      const Eigen::VectorXd cand = (theta + factor * step).cwiseMax(lower);
      const double v = obj.value(cand);
      if (std::isfinite(v) && v >= value - slack) {
        theta = cand;
        value = v;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.iterations = it;
      out.message = "step-halving failed to improve the log-likelihood at iteration " +
                    std::to_string(it) + " (gradient max-norm " + std::to_string(gmax) + ")";
      out.last = obj.derivatives(theta);
      out.free = free_set(theta, out.last.gradient, lower);
      break;
    }
  }
  out.theta = theta;
  out.value = value;
  return out;
}

// Inverse of the negative Hessian over the free parameters; NaN elsewhere.
Eigen::MatrixXd inverse_information(const Eigen::MatrixXd& hessian,
                                    const std::vector<Eigen::Index>& free) {
  const Eigen::Index p = hessian.rows();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(p, p, kNaN);
  const Eigen::MatrixXd h = sub(hessian, free);
  const Eigen::MatrixXd neg = -0.5 * (h + h.transpose());
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(neg);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return cov;
  Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(h.rows(), h.rows()));
  inv = 0.5 * (inv + inv.transpose());
  for (std::size_t a = 0; a < free.size(); ++a) {
    for (std::size_t b = 0; b < free.size(); ++b) cov(free[a], free[b]) = inv(a, b);
  }
  return cov;
}

std::vector<std::string> predictor_names(const ModelSpec& spec);

Eigen::VectorXd covariate_means(const ModelSpec& spec, const SurvivalData& data) {
  const std::vector<std::string> names = predictor_names(spec);
  Eigen::VectorXd means(static_cast<Eigen::Index>(names.size()));
  for (std::size_t c = 0; c < names.size(); ++c) {
    means(c) = data.covariates.col(data.column(names[c])).mean();
  }
  return means;
}

// Names of the predictor values accepted by predict(), in order.
std::vector<std::string> predictor_names(const ModelSpec& spec) {
  std::vector<std::string> names = spec.covariates;
  for (const auto& block : spec.ancillary_covariates) {
    for (const auto& name : block) {
      if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    }
  }
  return names;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

// --- names and specs ---------------------------------------------------------

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::AFT: return "aft";
    case Metric::PH: return "ph";
    case Metric::PartialLikelihood: return "cox";
  }
  throw std::logic_error("unknown metric");
}

Metric parse_metric(std::string_view name) {
  const std::string s = lower(name);
  if (s == "aft") return Metric::AFT;
  if (s == "ph") return Metric::PH;
  if (s == "cox" || s == "pl") return Metric::PartialLikelihood;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

std::string_view frailty_name(Frailty frailty) {
  switch (frailty) {
    case Frailty::None: return "none";
    case Frailty::Gamma: return "gamma";
    case Frailty::InverseGaussian: return "invgauss";
  }
  throw std::logic_error("unknown frailty");
}

Frailty parse_frailty(std::string_view name) {
  const std::string s = lower(name);
  if (s == "none") return Frailty::None;
  if (s == "gamma") return Frailty::Gamma;
  if (s == "invgauss" || s == "inverse-gaussian") return Frailty::InverseGaussian;
  throw std::invalid_argument("unknown frailty '" + std::string(name) + "'");
}

std::string_view ties_name(Ties ties) { return ties == Ties::Efron ? "efron" : "breslow"; }

Ties parse_ties(std::string_view name) {
  const std::string s = lower(name);
  if (s == "efron") return Ties::Efron;
  if (s == "breslow") return Ties::Breslow;
  throw std::invalid_argument("unknown ties method '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
  std::set<std::string> seen;
  for (const auto& c : covariates) {
    if (!seen.insert(c).second) throw std::invalid_argument("duplicate covariate '" + c + "'");
  }
  if (is_cox()) {
    if (metric != Metric::PartialLikelihood) {
      throw std::invalid_argument("the Cox model requires the partial-likelihood metric");
    }
    if (frailty != Frailty::None) {
      throw std::invalid_argument("frailty is not supported for the Cox model");
    }
    if (covariates.empty()) throw std::invalid_argument("the Cox model needs at least one covariate");
    if (!ancillary_covariates.empty() || rate_link) {
      throw std::invalid_argument("the Cox model has no distribution parameters to link");
    }
    return;
  }
  if (metric == Metric::PartialLikelihood) {
    throw std::invalid_argument("the partial-likelihood metric is only valid for the Cox model");
  }
  if (*family == Family::LogNormal && metric != Metric::AFT) {
    throw std::invalid_argument("the log-normal model is available only in the AFT metric");
  }
  if (metric == Metric::PH && *family != Family::Exponential && *family != Family::Weibull) {
    throw std::invalid_argument("the PH metric is available only for the exponential and Weibull");
  }
  if (rate_link && metric != Metric::AFT) {
    throw std::invalid_argument("a rate link requires the AFT metric");
  }
  if (static_cast<int>(ancillary_covariates.size()) > ancillary_arity(*family)) {
    throw std::invalid_argument("more ancillary links than ancillary parameters");
  }
  if (!(options.tolerance > 0.0) || options.max_iterations < 1) {
    throw std::invalid_argument("tolerance must be positive and max iterations at least 1");
  }
}

std::string ModelSpec::label() const {
  if (is_cox()) return "cox/" + std::string(ties_name(options.ties));
  return std::string(family_name(*family)) + "/" + std::string(metric_name(metric)) + "/" +
         std::string(frailty_name(frailty));
}

ModelSpec ModelSpec::parametric(Family family, Metric metric, std::vector<std::string> covariates,
                                Frailty frailty) {
  ModelSpec s;
  s.family = family;
  s.metric = metric;
  s.frailty = frailty;
  s.covariates = std::move(covariates);
  return s;
}

ModelSpec ModelSpec::cox(std::vector<std::string> covariates, Ties ties) {
  ModelSpec s;
  s.metric = Metric::PartialLikelihood;
  s.covariates = std::move(covariates);
  s.options.ties = ties;
  return s;
}

// --- data --------------------------------------------------------------------

int SurvivalData::events() const { return std::accumulate(event.begin(), event.end(), 0); }

Eigen::Index SurvivalData::column(std::string_view name) const {
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (names[c] == name) return static_cast<Eigen::Index>(c);
  }
  throw std::invalid_argument("unknown covariate '" + std::string(name) + "'");
}

void SurvivalData::validate() const {
  if (event.size() != time.size() || covariates.rows() != n() ||
      covariates.cols() != static_cast<Eigen::Index>(names.size())) {
    throw std::invalid_argument("survival data has inconsistent dimensions");
  }
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (!(time[i] > 0.0) || !std::isfinite(time[i])) {
      throw std::invalid_argument("duration of spell " + std::to_string(i) + " is not positive");
    }
    if (event[i] != 0 && event[i] != 1) {
      throw std::invalid_argument("event flag of spell " + std::to_string(i) + " is not 0/1");
    }
  }
  if (!covariates.allFinite()) throw std::invalid_argument("covariates must be finite");
}

const std::vector<std::string>& spell_covariate_names() {
  static const std::vector<std::string> names{"recession", "price_decline", "interest_rate"};
  return names;
}

SurvivalData SurvivalData::from_spells(const SpellSet& spells) {
  SurvivalData d;
  d.names = spell_covariate_names();
  const auto n = static_cast<Eigen::Index>(spells.spells.size());
  d.covariates.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = spells.spells[i];
    d.time.push_back(s.duration);
    d.event.push_back(s.event);
    d.covariates(i, 0) = s.recession;
    d.covariates(i, 1) = s.price_decline;
    d.covariates(i, 2) = s.interest_rate;
    d.labels.push_back(s.start.to_string());
  }
  return d;
}

// --- parameters --------------------------------------------------------------

Eigen::VectorXd ParamVector::flatten() const {
  Eigen::VectorXd out(beta.size() + ancillary.size() + (ln_theta ? 1 : 0));
  out << beta, ancillary;
  if (ln_theta) out(out.size() - 1) = *ln_theta;
  return out;
}

ParamVector ParamVector::unflatten(const ModelSpec& spec, const Eigen::VectorXd& flat) {
  const Layout L = make_layout(spec, nullptr);
  if (flat.size() != L.total) throw std::invalid_argument("parameter vector has the wrong size");
  ParamVector p;
  p.beta = flat.head(L.n_beta);
  p.ancillary = flat.segment(L.n_beta, L.n_anc);
  if (L.has_theta) p.ln_theta = flat(L.total - 1);
  return p;
}

int parameter_count(const ModelSpec& spec) { return make_layout(spec, nullptr).total; }

std::vector<std::string> parameter_names(const ModelSpec& spec) {
  const Layout L = make_layout(spec, nullptr);
  std::vector<std::string> names;
  if (!L.cox) names.emplace_back(kIntercept);
  for (const auto& c : spec.covariates) names.push_back(c);
  if (!L.cox) {
    const auto anc = ancillary_names(L.family);
    for (std::size_t j = 0; j < anc.size(); ++j) {
      names.emplace_back(anc[j]);
      if (j < spec.ancillary_covariates.size()) {
        for (const auto& c : spec.ancillary_covariates[j]) names.push_back(std::string(anc[j]) + ":" + c);
      }
    }
  }
  if (L.has_theta) names.emplace_back("ln_theta");
  return names;
}

std::vector<std::string> FitResult::predictor_names() const {
  return hazardlab::predictor_names(spec);
}

const Eigen::MatrixXd& FitResult::covariance() const {
  return cov_robust ? *cov_robust : cov_model;
}

int FitResult::k1() const {
  int k = static_cast<int>(spec.covariates.size());
  for (const auto& block : spec.ancillary_covariates) k += static_cast<int>(block.size());
  return k;
}

int FitResult::k2() const {
  if (spec.is_cox()) return 0;
  return 1 + ancillary_arity(*spec.family) + (spec.frailty != Frailty::None ? 1 : 0);
}

double FitResult::aic() const { return -2.0 * loglik + 2.0 * (k1() + k2()); }

double FitResult::bic() const { return -2.0 * loglik + std::log(static_cast<double>(n)) * (k1() + k2()); }

SingularHessianError::SingularHessianError(int iteration)
    : EstimationError("singular Hessian at iteration " + std::to_string(iteration)),
      iteration_(iteration) {}

NonFiniteLoglikError::NonFiniteLoglikError(Eigen::Index spell)
    : EstimationError("log-likelihood contribution of spell " + std::to_string(spell) +
                      " is not finite"),
      spell_(spell) {}

// --- likelihood and derivatives -------------------------------------------------

double loglik(const ModelSpec& spec, const SurvivalData& data, const ParamVector& params) {
  if (spec.is_cox()) throw std::invalid_argument("loglik: use partial_loglik for the Cox model");
  data.validate();
  const Layout L = make_layout(spec, &data);
  Eigen::Index bad = -1;
  const double v = parametric_loglik(L, data, params.flatten(), &bad);
  if (!std::isfinite(v)) throw NonFiniteLoglikError(bad);
  return v;
}

double partial_loglik(const ModelSpec& spec, const SurvivalData& data, const ParamVector& params) {
  if (!spec.is_cox()) throw std::invalid_argument("partial_loglik: not a Cox specification");
  const Layout L = make_layout(spec, &data);
  return cox_pass(data, cox_design(L, data), params.beta, spec.options.ties, false).loglik;
}

namespace {

ScoreHessian parametric_derivatives(const Layout& L, const SurvivalData& data,
                                    const Eigen::VectorXd& theta, Eigen::MatrixXd* scores) {
  ScoreHessian sh{Eigen::VectorXd::Zero(L.total), Eigen::MatrixXd::Zero(L.total, L.total)};
  if (scores) scores->setZero(data.n(), L.total);
  const int s = L.n_scalars;
  std::array<double, 4> u{}, g{};
  std::array<double, 16> H{};
  Eigen::MatrixXd J;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    spell_scalars(L, data, theta, i, u.data());
    spell_derivatives(L, data.time[i], data.event[i], u.data(), g.data(), H.data());
    scalar_jacobian(L, data, i, J);
    const Eigen::Map<const Eigen::VectorXd> gv(g.data(), s);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        Hm(H.data(), s, s);
    const Eigen::VectorXd si = J.transpose() * gv;
    sh.gradient += si;
    sh.hessian.noalias() += J.transpose() * Hm * J;
    if (scores) scores->row(i) = si.transpose();
  }
  return sh;
}

}  // namespace

ScoreHessian score_hessian(const ModelSpec& spec, const SurvivalData& data,
                           const ParamVector& params) {
  data.validate();
  const Layout L = make_layout(spec, &data);
  if (L.cox) {
    const CoxPass pass = cox_pass(data, cox_design(L, data), params.beta, spec.options.ties, false);
    return {pass.gradient, pass.hessian};
  }
  return parametric_derivatives(L, data, params.flatten(), nullptr);
}

Eigen::MatrixXd score_contributions(const ModelSpec& spec, const SurvivalData& data,
                                    const ParamVector& params) {
  data.validate();
  const Layout L = make_layout(spec, &data);
  if (L.cox) {
    return cox_pass(data, cox_design(L, data), params.beta, spec.options.ties, true).score_residuals;
  }
  Eigen::MatrixXd scores;
  parametric_derivatives(L, data, params.flatten(), &scores);
  return scores;
}

// --- fitting -------------------------------------------------------------------

ParamVector initial_params(const ModelSpec& spec, const SurvivalData& data) {
  const Layout L = make_layout(spec, &data);
  ParamVector p;
  p.beta = Eigen::VectorXd::Zero(L.n_beta);
  p.ancillary = Eigen::VectorXd::Zero(L.n_anc);
  if (L.cox) return p;

  double sum = 0.0;
  for (double t : data.time) sum += std::log(t);
  const double mean_log = sum / static_cast<double>(data.n());
  double m_ev = 0.0, ss = 0.0;
  int ne = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (!data.event[i]) continue;
    m_ev += std::log(data.time[i]);
    ++ne;
  }
  double sd = 1.0;
  if (ne >= 2) {
    m_ev /= ne;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (data.event[i]) ss += std::pow(std::log(data.time[i]) - m_ev, 2);
    }
    sd = std::sqrt(ss / (ne - 1));
    if (!(sd > 1e-6)) sd = 1.0;
  }
  const double weibull_p = std::numbers::pi / (std::sqrt(6.0) * sd);
  double intercept = mean_log + kEulerGamma;
  double scale_p = 1.0;
  switch (L.family) {
    case Family::Exponential:
      break;
    case Family::Gamma: {
      // ln T - eta is the log of a unit-scale gamma variate: match its variance.
      double lo = -10.0, hi = 10.0;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (boost::math::trigamma(std::exp(mid)) > sd * sd ? lo : hi) = mid;
      }
      const double k = std::exp(0.5 * (lo + hi));
      intercept = mean_log - boost::math::digamma(k);
      p.ancillary(L.anc_offset[0] - L.n_beta) = std::log(k);
      break;
    }
    case Family::Weibull:
      scale_p = weibull_p;
      intercept = mean_log + kEulerGamma / weibull_p;
      p.ancillary(L.anc_offset[0] - L.n_beta) = std::log(weibull_p);
      break;
    case Family::GeneralizedGamma:
      scale_p = weibull_p;
      intercept = mean_log + kEulerGamma / weibull_p;
      p.ancillary(L.anc_offset[0] - L.n_beta) = std::log(weibull_p);
      break;
    case Family::LogNormal:
      intercept = mean_log;
      p.ancillary(L.anc_offset[0] - L.n_beta) = std::log(sd);
      break;
  }
  if (spec.metric == Metric::PH) intercept = -scale_p * intercept;
  p.beta(0) = spec.rate_link ? -intercept : intercept;
  if (L.has_theta) p.ln_theta = std::log(kInitialTheta);
  return p;
}

namespace {

FitResult finish_fit(const ModelSpec& spec, const SurvivalData& data, const NewtonOutcome& nr) {
  FitResult fit;
  fit.spec = spec;
  fit.params = ParamVector::unflatten(spec, nr.theta);
  fit.names = parameter_names(spec);
  fit.loglik = nr.value;
  fit.iterations = nr.iterations;
  fit.converged = nr.converged;
  fit.message = nr.message;
  fit.gradient_max_norm = 0.0;
  for (Eigen::Index j : nr.free) {
    fit.gradient_max_norm = std::max(fit.gradient_max_norm, std::abs(nr.last.gradient(j)));
  }
  fit.n = static_cast<int>(data.n());
  fit.n_events = data.events();
  fit.covariate_means = covariate_means(spec, data);
  fit.cov_model = inverse_information(nr.last.hessian, nr.free);
  if (static_cast<Eigen::Index>(nr.free.size()) < nr.theta.size()) {
    fit.frailty_at_bound = true;
    if (!fit.message.empty()) fit.message += "; ";
    fit.message += "ln_theta held at its lower bound of -20 (frailty variance negligible)";
  }
  if (spec.options.robust && fit.cov_model.diagonal().array().isFinite().any()) {
    fit.cov_robust = robust_covariance(fit, data);
  }
  return fit;
}

}  // namespace

FitResult fit_mle(const ModelSpec& spec, const SurvivalData& data, const ParamVector& start) {
  if (spec.is_cox()) return fit_cox(data, spec.covariates, spec.options.ties, spec.options);
  data.validate();
  const Layout L = make_layout(spec, &data);
  if (data.events() < L.total) {
    throw EstimationError("too few events (" + std::to_string(data.events()) + ") for " +
                          std::to_string(L.total) + " parameters");
  }
  Objective obj;
  obj.value = [&](const Eigen::VectorXd& th) { return parametric_loglik(L, data, th); };
  obj.derivatives = [&](const Eigen::VectorXd& th) {
    return parametric_derivatives(L, data, th, nullptr);
  };
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(L.total, -kInf);
  if (L.has_theta) lower(L.total - 1) = kLnThetaFloor;
  Eigen::VectorXd theta0 = start.flatten().cwiseMax(lower);
  const NewtonOutcome nr = newton_raphson(obj, theta0, spec.options, lower);
  return finish_fit(spec, data, nr);
}

FitResult fit_mle(const ModelSpec& spec, const SurvivalData& data) {
  return fit_mle(spec, data, initial_params(spec, data));
}

FitResult fit_mle(const ModelSpec& spec, const SpellSet& spells) {
  return fit_mle(spec, SurvivalData::from_spells(spells));
}

FitResult fit_cox(const SurvivalData& data, const std::vector<std::string>& covariates, Ties ties,
                  FitOptions options) {
  data.validate();
  ModelSpec spec = ModelSpec::cox(covariates, ties);
  options.ties = ties;
  spec.options = options;
  const Layout L = make_layout(spec, &data);
  if (data.events() < 1) throw EstimationError("the Cox model needs at least one event");
  const CoxDesign D = cox_design(L, data);
  Objective obj;
  obj.value = [&](const Eigen::VectorXd& b) {
    const double v = cox_pass(data, D, b, ties, false).loglik;
    return std::isfinite(v) ? v : kNaN;
  };
  obj.derivatives = [&](const Eigen::VectorXd& b) {
    const CoxPass pass = cox_pass(data, D, b, ties, false);
    return ScoreHessian{pass.gradient, pass.hessian};
  };
  NewtonOutcome nr;
  try {
    nr = newton_raphson(obj, Eigen::VectorXd::Zero(L.n_beta), options,
                        Eigen::VectorXd::Constant(L.n_beta, -kInf));
  } catch (const SingularHessianError& e) {
    // Typically a monotone partial likelihood: report rather than fail.
    FitResult fit;
    fit.spec = spec;
    fit.names = parameter_names(spec);
    fit.params.beta = Eigen::VectorXd::Constant(L.n_beta, kNaN);
    fit.params.ancillary.resize(0);
    fit.loglik = kNaN;
    fit.iterations = e.iteration();
    fit.converged = false;
    fit.message = std::string(e.what()) + "; the partial likelihood may be monotone";
    fit.n = static_cast<int>(data.n());
    fit.n_events = data.events();
    fit.covariate_means = covariate_means(spec, data);
    fit.cov_model = Eigen::MatrixXd::Constant(L.n_beta, L.n_beta, kNaN);
    return fit;
  }
  return finish_fit(spec, data, nr);
}

FitResult fit_cox(const SpellSet& spells, Ties ties) {
  return fit_cox(SurvivalData::from_spells(spells), spell_covariate_names(), ties);
}

Eigen::MatrixXd robust_covariance(const FitResult& fit, const SurvivalData& data) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index j = 0; j < fit.cov_model.rows(); ++j) {
    if (std::isfinite(fit.cov_model(j, j))) free.push_back(j);
  }
  if (free.empty()) throw EstimationError("robust covariance: the information matrix is singular");
  const double n = static_cast<double>(data.n());
  const double k = fit.k1();
  if (!(n - k - 1.0 > 0.0)) throw EstimationError("robust covariance: too few spells");
  const Eigen::MatrixXd S = score_contributions(fit.spec, data, fit.params);
  Eigen::MatrixXd Sf(S.rows(), static_cast<Eigen::Index>(free.size()));
  for (std::size_t a = 0; a < free.size(); ++a) Sf.col(a) = S.col(free[a]);
  const Eigen::MatrixXd bread = sub(fit.cov_model, free);
  Eigen::MatrixXd v = bread * (Sf.transpose() * Sf) * bread * (n / (n - k - 1.0));
  v = 0.5 * (v + v.transpose());
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(fit.cov_model.rows(), fit.cov_model.cols(), kNaN);
  for (std::size_t a = 0; a < free.size(); ++a) {
    for (std::size_t b = 0; b < free.size(); ++b) out(free[a], free[b]) = v(a, b);
  }
  return out;
}

// --- prediction ------------------------------------------------------------------

namespace {

void check_parametric(const FitResult& fit, const char* fn) {
  if (fit.spec.is_cox()) {
    throw std::invalid_argument(std::string(fn) +
                                ": the Cox baseline is unspecified; parametric prediction is "
                                "unavailable");
  }
}

// Scalars for a covariate profile given in predictor_names() order.
std::array<double, 4> profile_scalars(const FitResult& fit, const Eigen::VectorXd& x,
                                      Layout& L, SurvivalData& row) {
  const auto names = predictor_names(fit.spec);
  if (x.size() != static_cast<Eigen::Index>(names.size())) {
    throw std::invalid_argument("expected " + std::to_string(names.size()) + " covariate values");
  }
  row.names = names;
  row.covariates = x.transpose();
  row.time = {1.0};
  row.event = {0};
  L = make_layout(fit.spec, &row);
  std::array<double, 4> u{};
  spell_scalars(L, row, fit.params.flatten(), 0, u.data());
  return u;
}

}  // namespace

double predict(const FitResult& fit, const Eigen::VectorXd& covariates, double t, PredictKind kind) {
  check_parametric(fit, "predict");
  if (!(t > 0.0) || !std::isfinite(t)) throw std::domain_error("predict: t must be positive");
  Layout L;
  SurvivalData row;
  const auto u = profile_scalars(fit, covariates, L, row);
  const LogHazard m = marginal_terms(L, t, u.data());
  switch (kind) {
    case PredictKind::Survivor: return std::exp(-m.cum_hazard);
    case PredictKind::Hazard: return std::exp(m.log_hazard);
    case PredictKind::CumHazard: return m.cum_hazard;
  }
  throw std::logic_error("unknown prediction kind");
}

double acceleration_factor(const FitResult& fit, const Eigen::VectorXd& covariates) {
  check_parametric(fit, "acceleration_factor");
  if (fit.spec.metric != Metric::AFT) {
    throw std::invalid_argument("acceleration_factor: the fit is not in the AFT metric");
  }
  Layout L;
  SurvivalData row;
  return std::exp(profile_scalars(fit, covariates, L, row)[0]);
}

HazardPeak hazard_peak(const FitResult& fit, const Eigen::VectorXd& covariates) {
  check_parametric(fit, "hazard_peak");
  const Family f = *fit.spec.family;
  if (fit.spec.frailty == Frailty::None && (f == Family::Exponential || f == Family::Weibull)) {
    throw std::domain_error("hazard_peak: the " + std::string(family_name(f)) +
                            " hazard is monotone; its supremum lies on the boundary");
  }
  constexpr double lo = 0.01, hi = 60.0;
  constexpr int grid = 6000;
  auto h = [&](double t) { return predict(fit, covariates, t, PredictKind::Hazard); };
  int best = 0;
  double best_h = -1.0;
  for (int i = 0; i <= grid; ++i) {
    const double v = h(lo + (hi - lo) * i / grid);
    if (v > best_h) {
      best_h = v;
      best = i;
    }
  }
  if (best == 0 || best == grid) {
    throw std::domain_error("hazard_peak: the hazard is monotone on [0.01, 60]; maximum at t = " +
                            std::to_string(best == 0 ? lo : hi));
  }
  double a = lo + (hi - lo) * (best - 1) / grid;
  double b = lo + (hi - lo) * (best + 1) / grid;
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double hc = h(c), hd = h(d);
  while (b - a > 1e-6) {
    if (hc > hd) {
      b = d;
      d = c;
      hd = hc;
      c = b - invphi * (b - a);
      hc = h(c);
    } else {
      a = c;
      c = d;
      hc = hd;
      d = a + invphi * (b - a);
      hd = h(d);
    }
  }
  const double t = 0.5 * (a + b);
  return {t, h(t)};
}

Eigen::VectorXd cox_cumulative_hazard(const FitResult& fit, const SurvivalData& data) {
  if (!fit.spec.is_cox()) throw std::invalid_argument("cox_cumulative_hazard: not a Cox fit");
  const Layout L = make_layout(fit.spec, &data);
  return cox_pass(data, cox_design(L, data), fit.params.beta, fit.spec.options.ties, true)
      .cum_hazard;
}

Eigen::VectorXd fitted_cumulative_hazard(const FitResult& fit, const SurvivalData& data) {
  if (fit.spec.is_cox()) return cox_cumulative_hazard(fit, data);
  const Layout L = make_layout(fit.spec, &data);
  const Eigen::VectorXd theta = fit.params.flatten();
  Eigen::VectorXd out(data.n());
  std::array<double, 4> u{};
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    spell_scalars(L, data, theta, i, u.data());
    out(i) = marginal_terms(L, data.time[i], u.data()).cum_hazard;
  }
  return out;
}

Eigen::VectorXd linear_predictor(const FitResult& fit, const SurvivalData& data) {
  const Layout L = make_layout(fit.spec, &data);
  const Eigen::VectorXd& beta = fit.params.beta;
  const int offset = L.cox ? 0 : 1;
  Eigen::VectorXd out = Eigen::VectorXd::Constant(data.n(), L.cox ? 0.0 : beta(0));
  for (std::size_t c = 0; c < L.x_cols.size(); ++c) {
    out += beta(offset + c) * data.covariates.col(L.x_cols[c]);
  }
  return out;
}

SchoenfeldResiduals schoenfeld_residuals(const FitResult& fit, const SurvivalData& data) {
  if (!fit.spec.is_cox()) throw std::invalid_argument("schoenfeld_residuals: not a Cox fit");
  const Layout L = make_layout(fit.spec, &data);
  CoxPass pass = cox_pass(data, cox_design(L, data), fit.params.beta, fit.spec.options.ties, true);
  return {std::move(pass.death_times), std::move(pass.schoenfeld)};
}

FitResult parameter_link_fit(Family family, const ParameterLink& link, const SurvivalData& data,
                             Frailty frailty, FitOptions options) {
  ModelSpec spec;
  spec.family = family;
  spec.metric = Metric::AFT;
  spec.frailty = frailty;
  spec.options = options;
  if (link.parameter == "rate") {
    spec.covariates = link.covariates;
    spec.rate_link = true;
    return fit_mle(spec, data);
  }
  const auto anc = ancillary_names(family);
  const auto it = std::find(anc.begin(), anc.end(), link.parameter);
  if (it == anc.end()) {
    throw std::invalid_argument("the " + std::string(family_name(family)) +
                                " family has no parameter '" + link.parameter + "'");
  }
  spec.ancillary_covariates.resize(static_cast<std::size_t>(it - anc.begin()) + 1);
  spec.ancillary_covariates.back() = link.covariates;
  return fit_mle(spec, data);
}

}  // namespace hazardlab
