#pragma once

// No-U-Turn sampler: multinomial trajectory sampling with the generalized
// U-turn criterion, dual-averaging step size adaptation and windowed
// diagonal metric adaptation during warmup.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "stiffinfer/errors.hpp"

namespace stiffinfer {

/// Log density with gradient. May throw NumericalError; the point is then
/// treated as having zero density.
using LogDensity = std::function<double(const Eigen::VectorXd& z, Eigen::VectorXd& grad)>;

struct NutsSettings {
  int n_warmup = 500;
  int n_draws = 1000;
  double delta_acc = 0.8;
  int max_tree_depth = 10;
  double max_energy_error = 1000.0;
  bool adapt_metric = true;
  double init_radius = 2.0; ///< initial z ~ U(-r, r) when no init is given
  double step_size = 1.0;   ///< initial guess, refined by the heuristic
  int metric_init_buffer = 75;
  int metric_base_window = 25;
  int metric_term_buffer = 50;
  /// Re-run the step size heuristic and restart dual averaging whenever the
  /// metric changes. Off by default: the short terminal buffer then leaves the
  /// averaged step size biased low and the acceptance statistic near 0.9.
  bool restart_step_size_on_metric_update = false;

  void validate() const {
    if (n_warmup < 0 || n_draws <= 0) throw ValidationError("warmup must be >= 0 and draws > 0");
    if (!(delta_acc > 0.0 && delta_acc < 1.0)) throw ValidationError("target acceptance must lie in (0, 1)");
    if (max_tree_depth < 1 || max_tree_depth > 30) throw ValidationError("max tree depth must lie in [1, 30]");
    if (!(step_size > 0.0)) throw ValidationError("step size must be positive");
    if (metric_init_buffer < 0 || metric_base_window < 1 || metric_term_buffer < 0)
      throw ValidationError("metric adaptation buffers must be non-negative and the base window positive");
  }
};

struct PosteriorChain {
  Eigen::MatrixXd draws; ///< n_draws x dim, sampler coordinates
  std::vector<double> log_density;
  std::vector<int> tree_depth;
  std::vector<int> n_leapfrog;
  std::vector<char> divergent;
  std::vector<double> accept_stat;
  std::vector<double> energy;
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  std::uint64_t seed = 0;
  std::size_t warmup_divergences = 0;

  double divergence_fraction() const {
    if (divergent.empty()) return 0.0;
    return static_cast<double>(std::count(divergent.begin(), divergent.end(), 1)) / divergent.size();
  }
  bool flagged() const { return divergence_fraction() > 0.05; }
  double mean_accept_stat() const {
    double s = 0.0;
    for (double a : accept_stat) s += a;
    return accept_stat.empty() ? 0.0 : s / accept_stat.size();
  }
};

namespace detail {

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct DualAveraging {
  double mu = 0.0, s_bar = 0.0, x_bar = 0.0, delta = 0.8;
  double gamma = 0.05, kappa = 0.75, t0 = 10.0;
  double counter = 0.0;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    s_bar = x_bar = counter = 0.0;
  }
  double learn(double accept) {
    ++counter;
    accept = std::min(1.0, accept);
    const double eta = 1.0 / (counter + t0);
    s_bar = (1.0 - eta) * s_bar + eta * (delta - accept);
    const double x = mu - s_bar * std::sqrt(counter) / gamma;
    const double w = std::pow(counter, -kappa);
    x_bar = (1.0 - w) * x_bar + w * x;
    return std::exp(x);
  }
  double final_step() const { return std::exp(x_bar); }
};

/// Windowed variance estimation schedule (75 / 25-doubling / 50 buffers).
class MetricWindows {
public:
  MetricWindows(int n_warmup, Eigen::Index dim, int init, int base, int term)
      : n_warmup_(n_warmup), dim_(dim), init_(init), term_(term), base_(base) {
    if (n_warmup < 20) {
      enabled_ = false;
      return;
    }
    if (init_ + term_ + base_ > n_warmup) {
      init_ = static_cast<int>(0.15 * n_warmup);
      term_ = static_cast<int>(0.1 * n_warmup);
      base_ = n_warmup - init_ - term_;
    }
    window_ = base_;
    next_ = init_ + window_ - 1;
    reset();
  }

  /// Feed the post-transition position; returns true when a window closed and
  /// inv_metric was updated.
  bool learn(const Eigen::VectorXd& q, Eigen::VectorXd& inv_metric) {
    if (!enabled_) return false;
    if (counter_ >= init_ && counter_ < n_warmup_ - term_ && counter_ != n_warmup_) add(q);
    if (counter_ == next_ && counter_ != n_warmup_) {
      compute_next();
      const double n = static_cast<double>(n_);
      Eigen::VectorXd var = m2_ / (n - 1.0);
      inv_metric = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
      reset();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

private:
  void add(const Eigen::VectorXd& q) {
    ++n_;
    const Eigen::VectorXd d = q - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_.array() += d.array() * (q - mean_).array();
  }
  void reset() {
    n_ = 0;
    mean_ = Eigen::VectorXd::Zero(dim_);
    m2_ = Eigen::VectorXd::Zero(dim_);
  }
  void compute_next() {
    const int last = n_warmup_ - term_ - 1;
    if (next_ == last) return;
    window_ *= 2;
    next_ = counter_ + window_;
    if (next_ != last && next_ + 2 * window_ >= n_warmup_ - term_) next_ = last;
  }

  int n_warmup_;
  Eigen::Index dim_;
  bool enabled_ = true;
  int init_, term_, base_;
  int window_ = 0, next_ = 0, counter_ = 0;
  long n_ = 0;
  Eigen::VectorXd mean_, m2_;
};

} // namespace detail

class Nuts {
public:
  Nuts(LogDensity target, Eigen::Index dim, NutsSettings settings, std::uint64_t seed)
      : f_(std::move(target)), dim_(dim), s_(settings), rng_(seed), seed_(seed) {
    s_.validate();
    inv_metric_ = Eigen::VectorXd::Ones(dim_);
  }

  PosteriorChain sample(const Eigen::VectorXd* init = nullptr) {
    Point z;
    z.q.resize(dim_);
    if (init) {
      if (init->size() != dim_) throw ValidationError("initial point has the wrong dimension");
      z.q = *init;
      evaluate(z);
      if (!std::isfinite(z.logp)) throw NumericalError("log density is not finite at the initial point");
    } else {
      std::uniform_real_distribution<double> u(-s_.init_radius, s_.init_radius);
      bool ok = false;
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        for (Eigen::Index i = 0; i < dim_; ++i) z.q[i] = u(rng_);
        evaluate(z);
        ok = std::isfinite(z.logp) && z.grad.allFinite();
      }
      if (!ok) throw NumericalError("no initial point with finite log density after 100 attempts");
    }

    eps_ = s_.step_size;
    init_step_size(z);
    detail::DualAveraging da;
    da.delta = s_.delta_acc;
    da.restart(eps_);
    detail::MetricWindows windows(s_.n_warmup, dim_, s_.metric_init_buffer, s_.metric_base_window,
                                  s_.metric_term_buffer);

    PosteriorChain out;
    out.seed = seed_;
    out.draws.resize(s_.n_draws, dim_);
    std::size_t warm_div = 0, warm_total = 0;
    for (int it = 0; it < s_.n_warmup + s_.n_draws; ++it) {
      const bool warm = it < s_.n_warmup;
      Transition tr = transition(z);
      if (warm) {
        ++warm_total;
        if (tr.divergent) ++warm_div;
        eps_ = da.learn(tr.accept);
        if (s_.adapt_metric && windows.learn(z.q, inv_metric_)) {
          evaluate(z);
          if (s_.restart_step_size_on_metric_update) {
            init_step_size(z);
            da.restart(eps_);
          }
        }
        if (it + 1 == s_.n_warmup) eps_ = da.final_step();
        continue;
      }
      const int k = it - s_.n_warmup;
      out.draws.row(k) = z.q.transpose();
      out.log_density.push_back(z.logp);
      out.tree_depth.push_back(tr.depth);
      out.n_leapfrog.push_back(tr.n_leapfrog);
      out.divergent.push_back(tr.divergent ? 1 : 0);
      out.accept_stat.push_back(tr.accept);
      out.energy.push_back(tr.energy);
    }
    if (warm_total >= 20 && warm_div == warm_total) throw NumericalError("every warmup transition diverged");
    out.step_size = eps_;
    out.inv_metric = inv_metric_;
    out.warmup_divergences = warm_div;
    return out;
  }

private:
  struct Point {
    Eigen::VectorXd q, p, grad;
    double logp = -std::numeric_limits<double>::infinity();
  };

  struct Transition {
    int depth = 0;
    int n_leapfrog = 0;
    bool divergent = false;
    double accept = 0.0;
    double energy = 0.0;
  };

  void evaluate(Point& z) {
    z.grad.resize(dim_);
    try {
      z.logp = f_(z.q, z.grad);
      if (!z.grad.allFinite()) z.logp = -std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      z.logp = -std::numeric_limits<double>::infinity();
    }
    if (std::isnan(z.logp)) z.logp = -std::numeric_limits<double>::infinity();
  }

  void sample_momentum(Point& z) {
    std::normal_distribution<double> n;
    z.p.resize(dim_);
    for (Eigen::Index i = 0; i < dim_; ++i) z.p[i] = n(rng_) / std::sqrt(inv_metric_[i]);
  }

  double hamiltonian(const Point& z) const {
    const double k = 0.5 * (z.p.array().square() * inv_metric_.array()).sum();
    const double h = -z.logp + k;
    return std::isnan(h) ? std::numeric_limits<double>::infinity() : h;
  }

  Eigen::VectorXd p_sharp(const Point& z) const { return inv_metric_.cwiseProduct(z.p); }

  void leapfrog(Point& z, double eps) {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * inv_metric_.cwiseProduct(z.p);
    evaluate(z);
    if (std::isfinite(z.logp)) z.p += 0.5 * eps * z.grad;
  }

  void init_step_size(Point z0) {
    Point z = z0;
    sample_momentum(z);
    double H0 = hamiltonian(z);
    leapfrog(z, eps_);
    double dH = H0 - hamiltonian(z);
    const int direction = dH > std::log(0.8) ? 1 : -1;
    for (int k = 0; k < 100; ++k) {
      z = z0;
      sample_momentum(z);
      H0 = hamiltonian(z);
      leapfrog(z, eps_);
      dH = H0 - hamiltonian(z);
      if (direction == 1 && !(dH > std::log(0.8))) break;
      if (direction == -1 && !(dH < std::log(0.8))) break;
      eps_ = direction == 1 ? 2.0 * eps_ : 0.5 * eps_;
      if (eps_ > 1e7) throw NumericalError("step size heuristic diverged; the posterior is likely improper");
      if (eps_ == 0.0) throw NumericalError("step size heuristic collapsed to zero");
    }
  }

  static bool no_u_turn(const Eigen::VectorXd& ps_minus, const Eigen::VectorXd& ps_plus, const Eigen::VectorXd& rho) {
    return ps_plus.dot(rho) > 0.0 && ps_minus.dot(rho) > 0.0;
  }

  Transition transition(Point& z) {
    sample_momentum(z);
    const double H0 = hamiltonian(z);
    Point z_fwd = z, z_bck = z, z_sample = z, z_propose = z;
    Eigen::VectorXd p_fwd_fwd = z.p, ps_fwd_fwd = p_sharp(z);
    Eigen::VectorXd p_fwd_bck = z.p, ps_fwd_bck = ps_fwd_fwd;
    Eigen::VectorXd p_bck_fwd = z.p, ps_bck_fwd = ps_fwd_fwd;
    Eigen::VectorXd p_bck_bck = z.p, ps_bck_bck = ps_fwd_fwd;
    Eigen::VectorXd rho = z.p;
    double log_sum_weight = 0.0;
    n_leapfrog_ = 0;
    sum_metro_ = 0.0;
    divergent_ = false;
    int depth = 0;
    std::uniform_real_distribution<double> u;

    while (depth < s_.max_tree_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim_), rho_bck = Eigen::VectorXd::Zero(dim_);
      double lsw_subtree = -std::numeric_limits<double>::infinity();
      bool valid;
      if (u(rng_) > 0.5) {
        cur_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        valid = build_tree(depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, H0, 1.0, lsw_subtree);
        z_fwd = cur_;
      } else {
        cur_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        valid = build_tree(depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, H0, -1.0, lsw_subtree);
        z_bck = cur_;
      }
      if (!valid) break;
      ++depth;
      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (u(rng_) < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = detail::log_sum_exp(log_sum_weight, lsw_subtree);
      rho = rho_bck + rho_fwd;
      bool persist = no_u_turn(ps_bck_bck, ps_fwd_fwd, rho);
      persist = persist && no_u_turn(ps_bck_bck, ps_fwd_bck, rho_bck + p_fwd_bck);
      persist = persist && no_u_turn(ps_bck_fwd, ps_fwd_fwd, rho_fwd + p_bck_fwd);
      if (!persist) break;
    }
    Transition tr;
    tr.depth = depth;
    tr.n_leapfrog = n_leapfrog_;
    tr.divergent = divergent_;
    tr.accept = n_leapfrog_ > 0 ? sum_metro_ / n_leapfrog_ : 0.0;
    z = z_sample;
    tr.energy = hamiltonian(z);
    return tr;
  }

  bool build_tree(int depth, Point& z_propose, Eigen::VectorXd& ps_beg, Eigen::VectorXd& ps_end, Eigen::VectorXd& rho,
                  Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double H0, double sign, double& log_sum_weight) {
    if (depth == 0) {
      leapfrog(cur_, sign * eps_);
      ++n_leapfrog_;
      const double h = hamiltonian(cur_);
      if (h - H0 > s_.max_energy_error) divergent_ = true;
      log_sum_weight = detail::log_sum_exp(log_sum_weight, H0 - h);
      sum_metro_ += H0 - h > 0.0 ? 1.0 : std::exp(H0 - h);
      z_propose = cur_;
      ps_beg = p_sharp(cur_);
      ps_end = ps_beg;
      rho += cur_.p;
      p_beg = cur_.p;
      p_end = p_beg;
      return !divergent_;
    }
    double lsw_init = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_init_end(dim_), ps_init_end(dim_), rho_init = Eigen::VectorXd::Zero(dim_);
    if (!build_tree(depth - 1, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, H0, sign, lsw_init))
      return false;

    Point z_propose_final = cur_;
    double lsw_final = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_final_beg(dim_), ps_final_beg(dim_), rho_final = Eigen::VectorXd::Zero(dim_);
    if (!build_tree(depth - 1, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end, H0, sign,
                    lsw_final))
      return false;

    const double lsw_subtree = detail::log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = detail::log_sum_exp(log_sum_weight, lsw_subtree);
    std::uniform_real_distribution<double> u;
    if (lsw_final > lsw_subtree) {
      z_propose = z_propose_final;
    } else if (u(rng_) < std::exp(lsw_final - lsw_subtree)) {
      z_propose = z_propose_final;
    }
    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(ps_beg, ps_end, rho_subtree);
    persist = persist && no_u_turn(ps_beg, ps_final_beg, rho_init + p_final_beg);
    persist = persist && no_u_turn(ps_init_end, ps_end, rho_final + p_init_end);
    return persist;
  }

  LogDensity f_;
  Eigen::Index dim_;
  NutsSettings s_;
  std::mt19937_64 rng_;
  std::uint64_t seed_;
  Eigen::VectorXd inv_metric_;
  double eps_ = 1.0;
  Point cur_;
  int n_leapfrog_ = 0;
  double sum_metro_ = 0.0;
  bool divergent_ = false;
};

inline PosteriorChain nuts_sample(LogDensity target, const Eigen::VectorXd& init, const NutsSettings& settings,
                                  std::uint64_t seed) {
  Nuts sampler(std::move(target), init.size(), settings, seed);
  return sampler.sample(&init);
}

// ---------------------------------------------------------------------------
// Convergence diagnostics over several chains of one scalar quantity.

namespace detail {

inline std::vector<double> autocovariance(const std::vector<double>& x) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> acov(n, 0.0);
  for (std::size_t lag = 0; lag < n; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    acov[lag] = s / static_cast<double>(n);
  }
  return acov;
}

inline double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double variance_of(const std::vector<double>& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

} // namespace detail

/// Split potential scale reduction factor.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) throw ValidationError("split R-hat needs at least 4 draws per chain");
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
  }
  const double n = static_cast<double>(halves.front().size());
  std::vector<double> means, vars;
  for (const auto& h : halves) {
    means.push_back(detail::mean_of(h));
    vars.push_back(detail::variance_of(h));
  }
  const double W = detail::mean_of(vars);
  const double B = n * detail::variance_of(means);
  if (W <= 0.0) return B <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
inline double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  if (n < 4) throw ValidationError("ESS needs at least 4 draws per chain");
  std::vector<std::vector<double>> acov;
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    if (c.size() != n) throw ValidationError("chains must have equal length");
    acov.push_back(detail::autocovariance(c));
    means.push_back(detail::mean_of(c));
    vars.push_back(acov.back()[0] * n / (n - 1.0));
  }
  const double mean_var = detail::mean_of(vars);
  double var_plus = mean_var * (n - 1.0) / n;
  if (m > 1) var_plus += detail::variance_of(means);
  if (!(var_plus > 0.0)) return static_cast<double>(m * n);
  auto mean_acov = [&](std::size_t t) {
    double s = 0.0;
    for (const auto& a : acov) s += a[t];
    return s / static_cast<double>(m);
  };
  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double even = 1.0, odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = odd;
  std::size_t t = 1;
  while (t < n - 4 && even + odd > 0.0) {
    even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
    if (even + odd >= 0.0) {
      rho[t + 1] = even;
      rho[t + 2] = odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  for (std::size_t k = 1; k + 3 <= max_t; k += 2) {
    if (rho[k + 1] + rho[k + 2] > rho[k - 1] + rho[k]) {
      rho[k + 1] = 0.5 * (rho[k - 1] + rho[k]);
      rho[k + 2] = rho[k + 1];
    }
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < max_t; ++k) sum += rho[k];
  const double tau = -1.0 + 2.0 * sum + rho[max_t];
  const double total = static_cast<double>(m * n);
  return std::min(total / std::max(tau, 1e-12), total * std::log10(total));
}

} // namespace stiffinfer
