#include "nowcast/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "nowcast/error.hpp"
#include "nowcast/models.hpp"

namespace nowcast {

void SamplerConfig::validate() const {
  if (chains < 1) throw ConfigError("chains must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (warmup < 0 || warmup >= iterations) throw ConfigError("warmup must satisfy 0 <= warmup < iterations");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("target_accept must lie in (0, 1)");
  if (max_leapfrog < 1) throw ConfigError("max_leapfrog must be >= 1");
  if (!(trajectory_time > 0)) throw ConfigError("trajectory_time must be > 0");
  if (!(init_radius > 0)) throw ConfigError("init_radius must be > 0");
}

void set_sampler_option(SamplerConfig& cfg, std::string_view key, std::string_view value) {
  const std::string k(key), v(value);
  double x = 0.0;
  try {
    std::size_t pos = 0;
    x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("sampler option '" + k + "': bad number '" + v + "'");
  }
  auto integer = [&] {
    if (x != std::floor(x)) throw ConfigError("sampler option '" + k + "' must be an integer");
    return static_cast<int>(x);
  };
  if (k == "chains") cfg.chains = integer();
  else if (k == "iterations") cfg.iterations = integer();
  else if (k == "warmup") cfg.warmup = integer();
  else if (k == "target_accept") cfg.target_accept = x;
  else if (k == "trajectory_time") cfg.trajectory_time = x;
  else if (k == "max_leapfrog") cfg.max_leapfrog = integer();
  else if (k == "divergence_threshold") cfg.divergence_threshold = x;
  else if (k == "init_radius") cfg.init_radius = x;
  else throw ConfigError("unknown sampler option '" + k + "'");
}

double ChainStats::mean_accept() const {
  if (accept_stat.empty()) return 0.0;
  double s = 0.0;
  for (double a : accept_stat) s += a;
  return s / static_cast<double>(accept_stat.size());
}

PosteriorDraws::PosteriorDraws(ParamLayout layout, int chains, int draws_per_chain)
    : layout_(std::move(layout)),
      chains_(chains),
      draws_(draws_per_chain),
      values_(std::size_t(chains) * std::size_t(draws_per_chain) * layout_.unconstrained_dim(), 0.0) {}

std::span<const double> PosteriorDraws::unconstrained(int chain, int iter) const {
  const std::size_t dim = layout_.unconstrained_dim();
  return {values_.data() + (std::size_t(chain) * std::size_t(draws_) + std::size_t(iter)) * dim, dim};
}

std::span<double> PosteriorDraws::unconstrained(int chain, int iter) {
  const std::size_t dim = layout_.unconstrained_dim();
  return {values_.data() + (std::size_t(chain) * std::size_t(draws_) + std::size_t(iter)) * dim, dim};
}

std::vector<double> PosteriorDraws::constrained(int chain, int iter) const {
  std::vector<double> x(layout_.constrained_dim());
  layout_.constrain(unconstrained(chain, iter), x);
  return x;
}

std::vector<std::vector<double>> PosteriorDraws::series(std::size_t param) const {
  // Locate the block so that only that block is transformed per draw.
  const ParamBlock* block = nullptr;
  for (const auto& b : layout_.blocks()) {
    if (param >= b.constrained_offset && param < b.constrained_offset + b.size) block = &b;
  }
  if (!block) throw DomainError("parameter index out of range");
  const std::size_t k = param - block->constrained_offset;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(chains_),
                                       std::vector<double>(static_cast<std::size_t>(draws_)));
  std::vector<double> simplex(block->size);
  for (int c = 0; c < chains_; ++c) {
    for (int i = 0; i < draws_; ++i) {
      const auto u = unconstrained(c, i);
      double x = 0.0;
      switch (block->transform) {
        case Transform::Log: x = std::exp(block->loc + block->scale * u[block->offset + k]); break;
        case Transform::Identity: x = block->loc + block->scale * u[block->offset + k]; break;
        case Transform::Simplex:
          simplex_constrain(u.subspan(block->offset, block->size - 1), simplex);
          x = simplex[k];
          break;
      }
      out[std::size_t(c)][std::size_t(i)] = x;
    }
  }
  return out;
}

std::size_t PosteriorDraws::total_divergences() const {
  std::size_t n = 0;
  for (const auto& s : stats) n += std::size_t(s.divergences);
  return n;
}

void evaluate(const LogDensity& target, PhasePoint& pt) {
  pt.grad.resize(pt.q.size());
  try {
    pt.log_density = target.log_density_grad(pt.q, pt.grad);
  } catch (const Error&) {
    pt.log_density = -std::numeric_limits<double>::infinity();
  }
  if (!std::isfinite(pt.log_density)) {
    pt.log_density = -std::numeric_limits<double>::infinity();
    return;
  }
  for (double g : pt.grad) {
    if (!std::isfinite(g)) {
      pt.log_density = -std::numeric_limits<double>::infinity();
      return;
    }
  }
}

double hamiltonian(const PhasePoint& pt, std::span<const double> inv_metric) {
  double k = 0.0;
  for (std::size_t i = 0; i < pt.p.size(); ++i) k += inv_metric[i] * pt.p[i] * pt.p[i];
  return 0.5 * k - pt.log_density;
}

bool leapfrog(const LogDensity& target, PhasePoint& pt, std::span<const double> inv_metric, double eps, int steps) {
  const std::size_t n = pt.q.size();
  for (int s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < n; ++i) pt.p[i] += 0.5 * eps * pt.grad[i];
    for (std::size_t i = 0; i < n; ++i) pt.q[i] += eps * inv_metric[i] * pt.p[i];
    evaluate(target, pt);
    if (!std::isfinite(pt.log_density)) return false;
    for (std::size_t i = 0; i < n; ++i) pt.p[i] += 0.5 * eps * pt.grad[i];
  }
  return true;
}

std::vector<std::pair<int, int>> metric_windows(int warmup) {
  std::vector<std::pair<int, int>> out;
  if (warmup < 20) return out;
  const int init = static_cast<int>(0.15 * warmup);
  const int term = static_cast<int>(0.1 * warmup);
  const int slow_end = warmup - term;
  int start = init;
  int size = 25;
  if (slow_end - init < size) size = slow_end - init;
  while (start < slow_end) {
    int end = start + size;
    if (end + 2 * size > slow_end) end = slow_end;
    out.emplace_back(start, end);
    start = end;
    size *= 2;
  }
  return out;
}

namespace {

class DualAveraging {
 public:
  void restart(double eps) {
    mu_ = std::log(10.0 * eps);
    h_bar_ = 0.0;
    x_bar_ = 0.0;
    counter_ = 0;
  }

  double update(double accept, double target) {
    ++counter_;
    const double m = static_cast<double>(counter_);
    const double eta = 1.0 / (m + kT0);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target - accept);
    const double x = mu_ - std::sqrt(m) / kGamma * h_bar_;
    const double w = std::pow(m, -kKappa);
    x_bar_ = w * x + (1.0 - w) * x_bar_;
    return std::exp(x);
  }

  double final_step() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double x_bar_ = 0.0;
  long counter_ = 0;
};

class Chain {
 public:
  Chain(const LogDensity& target, const SamplerConfig& cfg, int index)
      : target_(target), cfg_(cfg), rng_(make_stream(cfg.seed, kChainStream, std::uint64_t(index))) {
    const std::size_t n = target.dim();
    cur_.q.assign(n, 0.0);
    cur_.p.assign(n, 0.0);
    cur_.grad.assign(n, 0.0);
    inv_metric_.assign(n, 1.0);
  }

  void run(PosteriorDraws& draws, int chain) {
    initialise();
    const auto windows = metric_windows(cfg_.warmup);
    std::size_t next_window = 0;
    std::vector<double> w_mean(cur_.q.size()), w_m2(cur_.q.size());
    long w_count = 0;

    eps_ = find_step_size(1.0);
    set_max_steps();
    adapt_.restart(eps_);
    int accepted_warmup = 0;

    ChainStats& st = draws.stats[std::size_t(chain)];
    for (int it = 0; it < cfg_.iterations; ++it) {
      const bool warm = it < cfg_.warmup;
      const auto res = transition();
      if (warm) {
        accepted_warmup += res.accepted ? 1 : 0;
        if (res.divergent) ++st.warmup_divergences;
        eps_ = adapt_.update(res.accept_stat, cfg_.target_accept);
        set_max_steps();

        if (next_window < windows.size() && it >= windows[next_window].first &&
            it < windows[next_window].second) {
          ++w_count;
          for (std::size_t i = 0; i < cur_.q.size(); ++i) {
            const double delta = cur_.q[i] - w_mean[i];
            w_mean[i] += delta / static_cast<double>(w_count);
            w_m2[i] += delta * (cur_.q[i] - w_mean[i]);
          }
          if (it + 1 == windows[next_window].second) {
            const double nn = static_cast<double>(w_count);
            for (std::size_t i = 0; i < cur_.q.size(); ++i) {
              const double var = w_count > 1 ? w_m2[i] / (nn - 1.0) : 1.0;
              inv_metric_[i] = (nn / (nn + 5.0)) * var + 1e-3 * (5.0 / (nn + 5.0));
            }
            std::fill(w_mean.begin(), w_mean.end(), 0.0);
            std::fill(w_m2.begin(), w_m2.end(), 0.0);
            w_count = 0;
            ++next_window;
            eps_ = find_step_size(eps_);
            set_max_steps();
            adapt_.restart(eps_);
          }
        }
        if (it + 1 == cfg_.warmup) {
          if (accepted_warmup == 0) {
            throw SamplerError("chain " + std::to_string(chain) + ": every warm-up proposal was rejected");
          }
          eps_ = adapt_.final_step();
          set_max_steps();
        }
        continue;
      }
      const int k = it - cfg_.warmup;
      auto out = draws.unconstrained(chain, k);
      std::copy(cur_.q.begin(), cur_.q.end(), out.begin());
      st.accept_stat.push_back(res.accept_stat);
      st.leapfrog_steps.push_back(res.steps);
      st.divergent.push_back(res.divergent ? 1 : 0);
      if (res.divergent) ++st.divergences;
    }
    st.step_size = eps_;
    st.inv_metric = inv_metric_;
    st.max_leapfrog = max_steps_;
  }

 private:
  struct Result {
    double accept_stat = 0.0;
    bool accepted = false;
    bool divergent = false;
    int steps = 0;
  };

  void initialise() {
    std::uniform_real_distribution<double> unif(-cfg_.init_radius, cfg_.init_radius);
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (auto& v : cur_.q) v = unif(rng_);
      evaluate(target_, cur_);
      if (std::isfinite(cur_.log_density)) return;
    }
    throw SamplerError("could not find a finite initial point in 100 attempts");
  }

  void draw_momentum(PhasePoint& pt) {
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < pt.p.size(); ++i) pt.p[i] = normal(rng_) / std::sqrt(inv_metric_[i]);
  }

  void set_max_steps() {
    const double l = std::ceil(cfg_.trajectory_time / eps_);
    max_steps_ = static_cast<int>(std::clamp(std::isfinite(l) ? l : double(cfg_.max_leapfrog), 1.0,
                                             double(cfg_.max_leapfrog)));
  }

  // Doubles or halves eps until a single leapfrog step crosses an
  // acceptance probability of 0.8.
  double find_step_size(double eps) {
    PhasePoint trial = cur_;
    draw_momentum(trial);
    const double h0 = hamiltonian(trial, inv_metric_);
    PhasePoint pt = trial;
    leapfrog(target_, pt, inv_metric_, eps, 1);
    double h = hamiltonian(pt, inv_metric_);
    if (!std::isfinite(h)) h = std::numeric_limits<double>::infinity();
    const int direction = (h0 - h) > std::log(0.8) ? 1 : -1;
    for (int k = 0; k < 100; ++k) {
      draw_momentum(trial);
      const double start = hamiltonian(trial, inv_metric_);
      pt = trial;
      leapfrog(target_, pt, inv_metric_, eps, 1);
      h = hamiltonian(pt, inv_metric_);
      if (!std::isfinite(h)) h = std::numeric_limits<double>::infinity();
      const double delta = start - h;
      if (direction == 1 && !(delta > std::log(0.8))) break;
      if (direction == -1 && !(delta < std::log(0.8))) break;
      eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
      if (eps > 1e7 || eps < 1e-12) break;
    }
    return std::clamp(eps, 1e-12, 1e7);
  }

  Result transition() {
    Result res;
    std::uniform_int_distribution<int> steps(1, max_steps_);
    res.steps = steps(rng_);
    PhasePoint prop = cur_;
    draw_momentum(prop);
    const double h0 = hamiltonian(prop, inv_metric_);
    const bool ok = leapfrog(target_, prop, inv_metric_, eps_, res.steps);
    const double h1 = ok ? hamiltonian(prop, inv_metric_) : std::numeric_limits<double>::infinity();
    const double dh = h1 - h0;
    if (!std::isfinite(dh) || dh > cfg_.divergence_threshold) {
      res.divergent = true;
      res.accept_stat = 0.0;
      return res;
    }
    res.accept_stat = dh <= 0 ? 1.0 : std::exp(-dh);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (unif(rng_) < res.accept_stat) {
      cur_.q.swap(prop.q);
      cur_.grad.swap(prop.grad);
      cur_.log_density = prop.log_density;
      res.accepted = true;
    }
    return res;
  }

  const LogDensity& target_;
  const SamplerConfig& cfg_;
  Rng rng_;
  PhasePoint cur_;
  std::vector<double> inv_metric_;
  double eps_ = 1.0;
  int max_steps_ = 1;
  DualAveraging adapt_;
};

}  // namespace

PosteriorDraws run_chains(const LogDensity& target, const ParamLayout& layout, const SamplerConfig& cfg) {
  cfg.validate();
  if (layout.unconstrained_dim() != target.dim()) throw DomainError("layout does not match target dimension");
  PosteriorDraws draws(layout, cfg.chains, cfg.iterations - cfg.warmup);
  draws.stats.resize(std::size_t(cfg.chains));

  int jobs = cfg.jobs > 0 ? cfg.jobs : static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::clamp(jobs, 1, cfg.chains);
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(std::size_t(cfg.chains));
  auto worker = [&] {
    for (int c = next++; c < cfg.chains; c = next++) {
      try {
        Chain chain(target, cfg, c);
        chain.run(draws, c);
      } catch (...) {
        errors[std::size_t(c)] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const std::size_t total = draws.total_draws();
  const std::size_t div = draws.total_divergences();
  if (total > 0 && static_cast<double>(div) > 0.1 * static_cast<double>(total)) {
    draws.warnings.push_back(std::to_string(div) + " of " + std::to_string(total) +
                             " post-warm-up iterations diverged");
  }
  return draws;
}

PosteriorDraws run_chains(const Model& model, const SamplerConfig& cfg) {
  return run_chains(model, model.layout(), cfg);
}

}  // namespace nowcast
