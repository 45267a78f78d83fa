#include "nowcast/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <tuple>

#include "nowcast/csv.hpp"
#include "nowcast/error.hpp"
#include "nowcast/kernels.hpp"
#include "nowcast/nb.hpp"

namespace nowcast {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Location and unit of the unconstrained coordinate of a positive parameter.
std::pair<double, double> log_placement(const BoundPrior& p) {
  if (p.kind == PriorKind::Gamma) {
    return {std::log(p.a / p.b), std::min(1.0, 1.0 / std::sqrt(p.a))};
  }
  if (p.a > 0) return {std::log(p.a), std::min(1.0, p.b / p.a)};
  return {std::log(p.b), 1.0};
}

double normal_logpdf(double x, double mean, double sd, double* dx) {
  const double s = (x - mean) / sd;
  if (dx) *dx = -s / sd;
  return -0.5 * s * s - std::log(sd) - kHalfLog2Pi;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelSpec spec, const ReportingTriangle& tri, std::initializer_list<std::string_view> special)
    : spec_(std::move(spec)),
      num_bins_(tri.num_bins()),
      num_delays_(tri.num_delays()),
      counts_(tri.counts()) {
  if (num_bins_ < 1) throw DomainError("model needs at least one time bin");
  for (std::size_t c = 0; c < counts_.size(); ++c) {
    if (tri.mask()[c]) observed_.push_back(c);
  }
  log_factorial_.resize(counts_.size());
  for (std::size_t c = 0; c < counts_.size(); ++c) log_factorial_[c] = std::lgamma(static_cast<double>(counts_[c]) + 1.0);
  if (!(spec_.jitter > 0)) throw ConfigError("jitter must be > 0");
  for (const auto& [name, prior] : spec_.priors.entries()) {
    bool is_special = false;
    for (auto s : special) is_special = is_special || name == s;
    if (is_special) continue;
    Hyper h;
    h.name = name;
    h.prior = bind(prior, num_bins_, tri.max_delay());
    if (prior.kind == PriorKind::Dirichlet) throw ConfigError("'" + name + "' cannot take a dirichlet prior");
    if (prior.kind == PriorKind::Fixed) {
      h.fixed = true;
      h.value = h.prior.a;
      if (!(h.value > 0)) throw ConfigError("fixed value for '" + name + "' must be positive");
    } else {
      if (!(h.prior.b > 0)) throw ConfigError("prior for '" + name + "' needs a positive scale");
      if (h.prior.kind == PriorKind::Gamma && !(h.prior.a > 0)) {
        throw ConfigError("gamma prior for '" + name + "' needs a positive shape");
      }
    }
    hypers_.push_back(std::move(h));
  }
  r_index_ = hyper_index("r");
}

void Model::add_hyper_blocks() {
  for (auto& hp : hypers_) {
    if (hp.fixed) continue;
    std::tie(hp.loc, hp.scale) = log_placement(hp.prior);
    hp.offset = layout_.blocks()[layout_.add(hp.name, Transform::Log, 1, false, hp.loc, hp.scale)].offset;
  }
}

int Model::hyper_index(std::string_view name) const {
  for (std::size_t i = 0; i < hypers_.size(); ++i) {
    if (hypers_[i].name == name) return static_cast<int>(i);
  }
  throw ConfigError("model '" + variant_name(spec_.variant) + "' needs a prior entry '" + std::string(name) + "'");
}

BoundPrior Model::bound_prior(std::string_view name) const {
  return bind(spec_.priors.at(name), num_bins_, num_delays_ - 1);
}

std::vector<double> Model::hyper_values(std::span<const double> u) const {
  std::vector<double> h(hypers_.size());
  for (std::size_t i = 0; i < hypers_.size(); ++i) {
    const auto& hp = hypers_[i];
    if (hp.fixed) {
      h[i] = hp.value;
    } else {
      h[i] = std::exp(hp.loc + hp.scale * u[hp.offset]);
    }
  }
  return h;
}

double Model::hyper(std::span<const double> u, std::string_view name) const {
  return hyper_values(u)[static_cast<std::size_t>(hyper_index(name))];
}

double Model::dispersion(std::span<const double> u) const {
  return hyper(u, "r");
}

std::string Model::describe_hypers(std::span<const double> h) const {
  std::ostringstream os;
  for (std::size_t i = 0; i < hypers_.size(); ++i) {
    if (i) os << ", ";
    os << hypers_[i].name << "=" << csv::format_double(h[i]);
  }
  return os.str();
}

double Model::likelihood(std::span<const double> eta, double r, std::span<double> g_eta, double* g_r) const {
  double ll = 0.0;
  const NbDispersion disp(r);
  for (auto c : observed_) {
    const auto term = nb_log_pmf_grad(counts_[c], eta[c], disp, log_factorial_[c]);
    ll += term.log_pmf;
    if (!g_eta.empty()) g_eta[c] += term.d_log_mean;
    if (g_r) *g_r += term.d_r;
  }
  return ll;
}

Eigen::MatrixXd Model::rate_surface(std::span<const double> u) const {
  std::vector<double> eta(num_cells());
  log_rates(u, eta);
  Eigen::MatrixXd out(num_bins_, num_delays_);
  for (int t = 0; t < num_bins_; ++t) {
    for (int d = 0; d < num_delays_; ++d) {
      out(t, d) = std::max(std::exp(eta[std::size_t(t) * std::size_t(num_delays_) + std::size_t(d)]), kRateFloor);
    }
  }
  return out;
}

double Model::log_likelihood(std::span<const double> u) const {
  std::vector<double> eta(num_cells());
  log_rates(u, eta);
  return likelihood(eta, dispersion(u), {}, nullptr);
}

double Model::log_prior(std::span<const double> u) const {
  return total(u, false, {});
}

double Model::log_density_grad(std::span<const double> u, std::span<double> grad) const {
  return total(u, true, grad);
}

double Model::total(std::span<const double> u, bool with_likelihood, std::span<double> grad) const {
  if (u.size() != dim()) throw DomainError("parameter vector has wrong length");
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (grad.size() != dim()) throw DomainError("gradient buffer has wrong length");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  const auto h = hyper_values(u);
  std::vector<double> g_h(hypers_.size(), 0.0);
  double lp = evaluate(u, h, with_likelihood, want_grad, grad, g_h);
  for (std::size_t i = 0; i < hypers_.size(); ++i) {
    const auto& hp = hypers_[i];
    if (hp.fixed) continue;
    double dx = 0.0;
    lp += log_prior_density(hp.prior, h[i], true, want_grad ? &dx : nullptr);
    // x = exp(loc + scale * u): log |dx/du| = log(scale) + log(x).
    lp += std::log(hp.scale) + std::log(h[i]);
    if (want_grad) grad[hp.offset] += hp.scale * (h[i] * (g_h[i] + dx) + 1.0);
  }
  return lp;
}

// ---------------------------------------------------------------------------
// GP variants

namespace {

struct Term {
  KernelKind kind = KernelKind::SquaredExponential;
  int alpha = -1;    // 1D amplitude, or time amplitude for 2D
  int rho = -1;
  int alpha_d = -1;  // 2D only
  int rho_d = -1;
};

struct Block {
  std::vector<std::size_t> cells;
  bool two_d = false;
  int nt = 0;  // 2D grid sizes
  int nd = 0;
  std::vector<Term> terms;
  std::vector<int> noise;
  std::size_t z_offset = 0;  // constrained index into z
  // Factored layout: unit-amplitude Cholesky factors per term.
  std::vector<Eigen::MatrixXd> unit_l;
  std::vector<Eigen::MatrixXd> unit_l_d;
};

Eigen::MatrixXd unit_gram(KernelKind kind, double rho, int n) {
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) k(i, j) = kernel_at_distance(kind, 1.0, rho, std::abs(i - j));
  }
  return k;
}

Eigen::MatrixXd unit_gram_drho(KernelKind kind, double rho, int n) {
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) k(i, j) = kernel_drho_at_distance(kind, 1.0, rho, std::abs(i - j));
  }
  return k;
}

// <S, kron(A, B)> for a (p*q)x(p*q) matrix S in time-major blocks.
double kron_inner(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const auto p = a.rows();
  const auto q = b.rows();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (a(i, j) == 0.0) continue;
      acc += a(i, j) * s.block(i * q, j * q, q, q).cwiseProduct(b).sum();
    }
  }
  return acc;
}

class GpModel final : public Model {
 public:
  GpModel(ModelSpec spec, const ReportingTriangle& tri) : Model(std::move(spec), tri, {"z"}) {
    const int T = num_bins_;
    const int Dn = num_delays_;
    auto H = [&](std::string_view n) { return hyper_index(n); };
    auto block_all = [&] {
      Block b;
      for (std::size_t c = 0; c < num_cells(); ++c) b.cells.push_back(c);
      return b;
    };
    auto block_delays = [&](int lo, int hi) {
      Block b;
      for (int t = 0; t < T; ++t) {
        for (int d = lo; d <= hi && d < Dn; ++d) b.cells.push_back(std::size_t(t) * std::size_t(Dn) + std::size_t(d));
      }
      return b;
    };
    switch (spec_.variant) {
      case Variant::SE_1D: {
        auto b = block_all();
        b.terms = {{KernelKind::SquaredExponential, H("alpha"), H("rho")}};
        b.noise = {H("delta")};
        blocks_.push_back(std::move(b));
        break;
      }
      case Variant::SE_SE_1D:
      case Variant::SE_MAT12_1D:
      case Variant::SE_MAT32_1D: {
        const KernelKind short_kind = spec_.variant == Variant::SE_SE_1D     ? KernelKind::SquaredExponential
                                      : spec_.variant == Variant::SE_MAT12_1D ? KernelKind::Matern12
                                                                              : KernelKind::Matern32;
        auto b = block_all();
        b.terms = {{KernelKind::SquaredExponential, H("alpha_long"), H("rho_long")},
                   {short_kind, H("alpha_short"), H("rho_short")}};
        b.noise = {H("delta")};
        blocks_.push_back(std::move(b));
        break;
      }
      case Variant::SE_SE_SPLIT_1D: {
        if (Dn < 3) throw DomainError("data-split model needs max_delay >= 2");
        auto b1 = block_delays(0, 1);
        b1.terms = {{KernelKind::SquaredExponential, H("alpha1_long"), H("rho1_long")},
                    {KernelKind::SquaredExponential, H("alpha1_short"), H("rho1_short")}};
        b1.noise = {H("delta1")};
        auto b2 = block_delays(2, Dn - 1);
        b2.terms = {{KernelKind::SquaredExponential, H("alpha2_long"), H("rho2_long")},
                    {KernelKind::SquaredExponential, H("alpha2_short"), H("rho2_short")}};
        b2.noise = {H("delta2")};
        blocks_.push_back(std::move(b1));
        blocks_.push_back(std::move(b2));
        break;
      }
      case Variant::ADDITIVE_2D: {
        auto b = block_all();
        b.two_d = true;
        b.nt = T;
        b.nd = Dn;
        b.terms = {{KernelKind::SquaredExponential, H("alpha1_t"), H("rho1_t"), H("alpha1_d"), H("rho1_d")},
                   {KernelKind::SquaredExponential, H("alpha2_t"), H("rho2_t"), H("alpha2_d"), H("rho2_d")}};
        b.noise = {H("delta1"), H("delta2")};
        blocks_.push_back(std::move(b));
        break;
      }
      case Variant::NOBBS: throw ConfigError("nobbs is not a GP variant");
    }

    bool all_fixed = true;
    for (const auto& b : blocks_) {
      for (const auto& term : b.terms) {
        all_fixed = all_fixed && hypers_[std::size_t(term.rho)].fixed;
        if (term.rho_d >= 0) all_fixed = all_fixed && hypers_[std::size_t(term.rho_d)].fixed;
      }
    }
    latent_ = spec_.latent;
    if (latent_ == LatentLayout::Auto) latent_ = all_fixed ? LatentLayout::Factored : LatentLayout::Joint;
    if (latent_ == LatentLayout::Factored && !all_fixed) {
      throw ConfigError("factored latent layout needs every lengthscale fixed");
    }

    std::size_t z_size = 0;
    for (auto& b : blocks_) {
      b.z_offset = z_size;
      const std::size_t n = b.cells.size();
      if (latent_ == LatentLayout::Joint) {
        z_size += n;
        continue;
      }
      for (const auto& term : b.terms) {
        const double rho = hypers_[std::size_t(term.rho)].value;
        try {
          if (b.two_d) {
            const double rho_d = hypers_[std::size_t(term.rho_d)].value;
            b.unit_l.push_back(cholesky_jitter(unit_gram(term.kind, rho, b.nt), spec_.jitter).lower);
            b.unit_l_d.push_back(cholesky_jitter(unit_gram(term.kind, rho_d, b.nd), spec_.jitter).lower);
          } else {
            b.unit_l.push_back(
                cholesky_jitter(unit_gram(term.kind, rho, static_cast<int>(n)), spec_.jitter).lower);
          }
        } catch (const NotPositiveDefinite& e) {
          throw ModelEvaluationError(std::string("unit kernel factor failed: ") + e.what());
        }
      }
      z_size += n * (b.terms.size() + (b.noise.empty() ? 0 : 1));
    }

    const auto zp = bound_prior("z");
    if (spec_.priors.at("z").kind != PriorKind::Normal) throw ConfigError("z needs a normal prior");
    z_mean_ = zp.a;
    z_sd_ = zp.b;
    finish_layout(z_size);
  }

  void log_rates(std::span<const double> u, std::span<double> eta) const override {
    const auto h = hyper_values(u);
    std::vector<double> z(z_count_);
    read_z(u, z);
    std::fill(eta.begin(), eta.end(), 0.0);
    for (const auto& b : blocks_) forward(b, h, z, eta, nullptr);
  }

 protected:
  double evaluate(std::span<const double> u, std::span<const double> h, bool with_likelihood, bool want_grad,
                  std::span<double> grad, std::span<double> g_h) const override {
    std::vector<double> z(z_count_);
    read_z(u, z);
    double lp = 0.0;
    std::vector<double> gz(want_grad ? z_count_ : 0, 0.0);
    // Normal prior on z; its log-density constant cancels against the
    // Jacobian log(z_sd) of the affine map from u.
    double ss = 0.0;
    for (std::size_t i = 0; i < z_count_; ++i) {
      const double s = (z[i] - z_mean_) / z_sd_;
      ss += s * s;
      if (want_grad) gz[i] -= s / z_sd_;
    }
    lp += -0.5 * ss - static_cast<double>(z_count_) * kHalfLog2Pi;
    if (with_likelihood) {
      std::vector<double> eta(num_cells(), 0.0);
      std::vector<Cache> caches(blocks_.size());
      for (std::size_t k = 0; k < blocks_.size(); ++k) {
        forward(blocks_[k], h, z, eta, want_grad ? &caches[k] : nullptr);
      }
      std::vector<double> g_eta(want_grad ? num_cells() : 0, 0.0);
      double g_r = 0.0;
      lp += likelihood(eta, h[std::size_t(r_index_)], g_eta, want_grad ? &g_r : nullptr);
      if (want_grad) {
        g_h[std::size_t(r_index_)] += g_r;
        for (std::size_t k = 0; k < blocks_.size(); ++k) backward(blocks_[k], h, z, g_eta, caches[k], gz, g_h);
      }
    }
    if (want_grad) {
      for (std::size_t i = 0; i < z_count_; ++i) grad[z_offset_ + i] = z_sd_ * gz[i];
    }
    return lp;
  }

 private:
  struct Cache {
    Eigen::MatrixXd l;                  // joint: Cholesky factor
    std::vector<Eigen::VectorXd> field;  // factored: unit fields per term
  };

  void finish_layout(std::size_t z_size) {
    add_hyper_blocks();
    z_count_ = z_size;
    z_offset_ = layout_.blocks()[layout_.add("z", Transform::Identity, z_size, true, z_mean_, z_sd_)].offset;
  }

  void read_z(std::span<const double> u, std::span<double> z) const {
    for (std::size_t i = 0; i < z_count_; ++i) z[i] = z_mean_ + z_sd_ * u[z_offset_ + i];
  }

  static double noise_sd(const Block& b, std::span<const double> h) {
    double v = 0.0;
    for (int k : b.noise) v += h[std::size_t(k)] * h[std::size_t(k)];
    return std::sqrt(v);
  }

  Eigen::MatrixXd joint_gram(const Block& b, std::span<const double> h) const {
    const auto n = static_cast<Eigen::Index>(b.cells.size());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (const auto& term : b.terms) {
      if (b.two_d) {
        const double amp = h[std::size_t(term.alpha)] * h[std::size_t(term.alpha_d)];
        const auto kt = unit_gram(term.kind, h[std::size_t(term.rho)], b.nt);
        const auto kd = unit_gram(term.kind, h[std::size_t(term.rho_d)], b.nd);
        for (int i = 0; i < b.nt; ++i) {
          for (int j = 0; j < b.nt; ++j) k.block(i * b.nd, j * b.nd, b.nd, b.nd) += (amp * amp * kt(i, j)) * kd;
        }
      } else {
        const double a = h[std::size_t(term.alpha)];
        k += (a * a) * unit_gram(term.kind, h[std::size_t(term.rho)], static_cast<int>(n));
      }
    }
    const double s = noise_sd(b, h);
    k.diagonal().array() += s * s;
    return k;
  }

  void forward(const Block& b, std::span<const double> h, std::span<const double> z, std::span<double> eta,
               Cache* cache) const {
    const auto n = static_cast<Eigen::Index>(b.cells.size());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    if (latent_ == LatentLayout::Joint) {
      Eigen::MatrixXd l;
      try {
        l = cholesky_jitter(joint_gram(b, h), spec_.jitter).lower;
      } catch (const NotPositiveDefinite& e) {
        throw ModelEvaluationError(std::string(e.what()) + " at " + describe_hypers(h));
      }
      Eigen::Map<const Eigen::VectorXd> zb(z.data() + b.z_offset, n);
      out = l.triangularView<Eigen::Lower>() * zb;
      if (cache) cache->l = std::move(l);
    } else {
      std::size_t off = b.z_offset;
      for (std::size_t j = 0; j < b.terms.size(); ++j) {
        const auto& term = b.terms[j];
        Eigen::VectorXd v(n);
        if (b.two_d) {
          kron_matvec(b.unit_l[j], b.unit_l_d[j], z.subspan(off, std::size_t(n)), {v.data(), std::size_t(n)}, false);
          out += (h[std::size_t(term.alpha)] * h[std::size_t(term.alpha_d)]) * v;
        } else {
          Eigen::Map<const Eigen::VectorXd> zj(z.data() + off, n);
          v.noalias() = b.unit_l[j].triangularView<Eigen::Lower>() * zj;
          out += h[std::size_t(term.alpha)] * v;
        }
        if (cache) cache->field.push_back(std::move(v));
        off += std::size_t(n);
      }
      if (!b.noise.empty()) {
        Eigen::Map<const Eigen::VectorXd> zn(z.data() + off, n);
        out += noise_sd(b, h) * zn;
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) eta[b.cells[std::size_t(i)]] += out(i);
  }

  void backward(const Block& b, std::span<const double> h, std::span<const double> z, std::span<const double> g_eta,
                const Cache& cache, std::span<double> gz, std::span<double> g_h) const {
    const auto n = static_cast<Eigen::Index>(b.cells.size());
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) g(i) = g_eta[b.cells[std::size_t(i)]];

    if (latent_ == LatentLayout::Factored) {
      std::size_t off = b.z_offset;
      for (std::size_t j = 0; j < b.terms.size(); ++j) {
        const auto& term = b.terms[j];
        const double g_amp = g.dot(cache.field[j]);
        Eigen::VectorXd back(n);
        double amp = 0.0;
        if (b.two_d) {
          const double at = h[std::size_t(term.alpha)], ad = h[std::size_t(term.alpha_d)];
          amp = at * ad;
          g_h[std::size_t(term.alpha)] += g_amp * ad;
          g_h[std::size_t(term.alpha_d)] += g_amp * at;
          kron_matvec(b.unit_l[j], b.unit_l_d[j], {g.data(), std::size_t(n)}, {back.data(), std::size_t(n)}, true);
        } else {
          amp = h[std::size_t(term.alpha)];
          g_h[std::size_t(term.alpha)] += g_amp;
          back.noalias() = b.unit_l[j].triangularView<Eigen::Lower>().transpose() * g;
        }
        for (Eigen::Index i = 0; i < n; ++i) gz[off + std::size_t(i)] += amp * back(i);
        off += std::size_t(n);
      }
      if (!b.noise.empty()) {
        const double s = noise_sd(b, h);
        double g_s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          g_s += g(i) * z[off + std::size_t(i)];
          gz[off + std::size_t(i)] += s * g(i);
        }
        for (int k : b.noise) g_h[std::size_t(k)] += g_s * h[std::size_t(k)] / s;
      }
      return;
    }

    // Joint layout: eta = L z with L = chol(K(h)).
    const auto& l = cache.l;
    Eigen::Map<const Eigen::VectorXd> zb(z.data() + b.z_offset, n);
    const Eigen::VectorXd w = l.triangularView<Eigen::Lower>().transpose() * g;
    for (Eigen::Index i = 0; i < n; ++i) gz[b.z_offset + std::size_t(i)] += w(i);

    // Reverse mode through the Cholesky factor: K_bar = L^-T Phi(w z^T) L^-1
    // where Phi keeps the lower triangle and halves the diagonal.
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = j; i < n; ++i) phi(i, j) = w(i) * zb(j);
      phi(j, j) *= 0.5;
    }
    const auto lt = l.triangularView<Eigen::Lower>().transpose();
    Eigen::MatrixXd a = lt.solve(phi);
    Eigen::MatrixXd kbar_t = lt.solve(a.transpose());
    const Eigen::MatrixXd kbar = kbar_t.transpose();

    for (const auto& term : b.terms) {
      if (b.two_d) {
        const double at = h[std::size_t(term.alpha)], ad = h[std::size_t(term.alpha_d)];
        const double amp2 = at * at * ad * ad;
        const double rt = h[std::size_t(term.rho)], rd = h[std::size_t(term.rho_d)];
        const auto kt = unit_gram(term.kind, rt, b.nt);
        const auto kd = unit_gram(term.kind, rd, b.nd);
        const double c = amp2 * kron_inner(kbar, kt, kd);
        g_h[std::size_t(term.alpha)] += 2.0 * c / at;
        g_h[std::size_t(term.alpha_d)] += 2.0 * c / ad;
        if (!hypers_[std::size_t(term.rho)].fixed) {
          g_h[std::size_t(term.rho)] += amp2 * kron_inner(kbar, unit_gram_drho(term.kind, rt, b.nt), kd);
        }
        if (!hypers_[std::size_t(term.rho_d)].fixed) {
          g_h[std::size_t(term.rho_d)] += amp2 * kron_inner(kbar, kt, unit_gram_drho(term.kind, rd, b.nd));
        }
      } else {
        const double al = h[std::size_t(term.alpha)];
        const double rho = h[std::size_t(term.rho)];
        const double c = al * al * kbar.cwiseProduct(unit_gram(term.kind, rho, static_cast<int>(n))).sum();
        g_h[std::size_t(term.alpha)] += 2.0 * c / al;
        if (!hypers_[std::size_t(term.rho)].fixed) {
          g_h[std::size_t(term.rho)] +=
              al * al * kbar.cwiseProduct(unit_gram_drho(term.kind, rho, static_cast<int>(n))).sum();
        }
      }
    }
    const double tr = kbar.trace();
    for (int k : b.noise) g_h[std::size_t(k)] += 2.0 * h[std::size_t(k)] * tr;
  }

  std::vector<Block> blocks_;
  double z_mean_ = 0.0;
  double z_sd_ = 0.1;
  std::size_t z_count_ = 0;
  std::size_t z_offset_ = 0;
};

// ---------------------------------------------------------------------------
// NobBS: log lambda[t][d] = a[t] + log beta[d], a a Gaussian random walk.

class NobbsModel final : public Model {
 public:
  NobbsModel(ModelSpec spec, const ReportingTriangle& tri) : Model(std::move(spec), tri, {"a1", "beta"}) {
    tau_index_ = hyper_index("tau");
    if (spec_.priors.at("a1").kind != PriorKind::Normal) throw ConfigError("a1 needs a normal prior");
    if (spec_.priors.at("beta").kind != PriorKind::Dirichlet) throw ConfigError("beta needs a dirichlet prior");
    a1_ = bound_prior("a1");
    conc_ = bound_prior("beta").a;
    latent_ = LatentLayout::Joint;

    // Centre the levels near the log of the typical observed row total.
    std::vector<double> row(std::size_t(num_bins_), 0.0);
    for (auto c : observed_) row[c / std::size_t(num_delays_)] += static_cast<double>(counts_[c]);
    double mean_row = 0.0;
    for (double v : row) mean_row += v;
    mean_row /= num_bins_;
    const double a_loc = std::log1p(mean_row);

    add_hyper_blocks();
    a_offset_ = layout_.blocks()[layout_.add("a", Transform::Identity, std::size_t(num_bins_), true, a_loc, 1.0)].offset;
    beta_offset_ = layout_.blocks()[layout_.add("beta", Transform::Simplex, std::size_t(num_delays_))].offset;
  }

  void log_rates(std::span<const double> u, std::span<double> eta) const override {
    std::vector<double> beta(static_cast<std::size_t>(num_delays_));
    simplex_constrain(u.subspan(beta_offset_, beta.size() - 1), beta);
    const double a_loc = layout_.block("a").loc;
    for (int t = 0; t < num_bins_; ++t) {
      const double a = a_loc + u[a_offset_ + std::size_t(t)];
      for (int d = 0; d < num_delays_; ++d) {
        eta[std::size_t(t) * std::size_t(num_delays_) + std::size_t(d)] = a + std::log(beta[std::size_t(d)]);
      }
    }
  }

 protected:
  double evaluate(std::span<const double> u, std::span<const double> h, bool with_likelihood, bool want_grad,
                  std::span<double> grad, std::span<double> g_h) const override {
    const auto T = std::size_t(num_bins_);
    const auto K = std::size_t(num_delays_);
    const double a_loc = layout_.block("a").loc;
    std::vector<double> a(T), beta(K);
    for (std::size_t t = 0; t < T; ++t) a[t] = a_loc + u[a_offset_ + t];
    const auto y = u.subspan(beta_offset_, K - 1);
    double lp = simplex_constrain(y, beta);

    std::vector<double> ga(T, 0.0), gbeta(K, 0.0);
    const double tau = h[std::size_t(tau_index_)];

    // Random walk on the levels.
    double da = 0.0;
    lp += normal_logpdf(a[0], a1_.a, a1_.b, &da);
    ga[0] += da;
    for (std::size_t t = 1; t < T; ++t) {
      const double step = a[t] - a[t - 1];
      lp += 0.5 * std::log(tau) - kHalfLog2Pi - 0.5 * tau * step * step;
      ga[t] -= tau * step;
      ga[t - 1] += tau * step;
      g_h[std::size_t(tau_index_)] += 0.5 / tau - 0.5 * step * step;
    }

    // Dirichlet on the delay probabilities.
    lp += std::lgamma(conc_ * double(K)) - double(K) * std::lgamma(conc_);
    for (std::size_t d = 0; d < K; ++d) {
      lp += (conc_ - 1.0) * std::log(beta[d]);
      gbeta[d] += (conc_ - 1.0) / beta[d];
    }

    if (with_likelihood) {
      std::vector<double> eta(T * K);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t d = 0; d < K; ++d) eta[t * K + d] = a[t] + std::log(beta[d]);
      }
      std::vector<double> g_eta(want_grad ? T * K : 0, 0.0);
      double g_r = 0.0;
      lp += likelihood(eta, h[std::size_t(r_index_)], g_eta, want_grad ? &g_r : nullptr);
      if (want_grad) {
        g_h[std::size_t(r_index_)] += g_r;
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t d = 0; d < K; ++d) {
            ga[t] += g_eta[t * K + d];
            gbeta[d] += g_eta[t * K + d] / beta[d];
          }
        }
      }
    }
    if (want_grad) {
      for (std::size_t t = 0; t < T; ++t) grad[a_offset_ + t] = ga[t];
      simplex_backprop(y, gbeta, grad.subspan(beta_offset_, K - 1));
    }
    return lp;
  }

 private:
  int tau_index_ = -1;
  BoundPrior a1_;
  double conc_ = 0.1;
  std::size_t a_offset_ = 0;
  std::size_t beta_offset_ = 0;
};

}  // namespace

std::unique_ptr<Model> make_model(const ModelSpec& spec, const ReportingTriangle& tri) {
  if (spec.variant == Variant::NOBBS) return std::make_unique<NobbsModel>(spec, tri);
  return std::make_unique<GpModel>(spec, tri);
}

}  // namespace nowcast
