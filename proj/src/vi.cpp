#include "irt/vi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <unordered_map>

#include "irt/icc.hpp"
#include "irt/numerics.hpp"
#include "irt/rng.hpp"

namespace irt::vi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kHalfLog2PiE = 1.4189385332046727417803297364056;  // 0.5*log(2*pi*e)

// One variational factor: Normal(loc, softplus(raw)) in unconstrained space.
struct VarParam {
    double loc;
    double raw;
};

double raw_of_scale(double scale) { return softplus_inv(scale); }

// Joint density of latents and data; gradient w.r.t. the sampled latents.
class Objective {
  public:
    virtual ~Objective() = default;
    virtual std::size_t size() const = 0;
    // Overwrites grad (length size()) and returns log p(data, x).
    virtual double log_joint(const double* x, double* grad) const = 0;
};

// Gaussian prior block x_k ~ N(mu, 1/tau) with mu, w = log(tau) themselves
// latent; adds the prior terms and their gradients, then the hyperpriors.
void add_family_prior(const double* x, double* g, std::size_t off, std::size_t cnt,
                      std::size_t mu_idx, std::size_t w_idx, const FamilyPrior& prior,
                      double& ll) {
    const double mu = x[mu_idx];
    const double w = x[w_idx];
    const double tau = std::exp(w);
    for (std::size_t k = 0; k < cnt; ++k) {
        const double d = x[off + k] - mu;
        ll += 0.5 * w - 0.5 * kLog2Pi - 0.5 * tau * d * d;
        g[off + k] += -tau * d;
        g[mu_idx] += tau * d;
        g[w_idx] += 0.5 - 0.5 * tau * d * d;
    }
    const double s0 = prior.mean.scale;
    const double dmu = mu - prior.mean.loc;
    ll += -0.5 * kLog2Pi - std::log(s0) - 0.5 * dmu * dmu / (s0 * s0);
    g[mu_idx] += -dmu / (s0 * s0);
    const double a0 = prior.precision.shape, r0 = prior.precision.rate;
    ll += a0 * std::log(r0) + a0 * w - r0 * tau - std::lgamma(a0);
    g[w_idx] += a0 - r0 * tau;
}

// Bernoulli response model over theta/b(/gamma/lambda): 1PL, 2PL, 3PL, MD2PL.
class ResponseObjective : public Objective {
  public:
    ResponseObjective(const ResponseMatrix& matrix, ModelKind kind, int dim,
                      const HyperPriors& priors)
        : z_(matrix.cells()),
          kind_(kind),
          n_(matrix.n_models()),
          m_(matrix.n_items()),
          d_(static_cast<std::size_t>(dim)),
          priors_(priors) {
        theta_off_ = 0;
        b_off_ = theta_off_ + n_ * d_;
        u_off_ = b_off_ + m_ * d_;
        const std::size_t u_cnt = has_item_gamma(kind_) ? m_ * d_ : 0;
        v_off_ = u_off_ + u_cnt;
        const std::size_t v_cnt = has_guessing(kind_) ? m_ : 0;
        hyper_off_ = v_off_ + v_cnt;
        n_hyper_families_ = has_item_gamma(kind_) ? 3 : 2;
        total_ = hyper_off_ + 2 * n_hyper_families_;
        gamma_scratch_.resize(u_cnt);
        lambda_scratch_.resize(v_cnt);
    }

    std::size_t size() const override { return total_; }

    std::size_t theta_off() const { return theta_off_; }
    std::size_t b_off() const { return b_off_; }
    std::size_t u_off() const { return u_off_; }
    std::size_t v_off() const { return v_off_; }
    std::size_t hyper_off() const { return hyper_off_; }
    std::size_t hyper_families() const { return n_hyper_families_; }

    double log_joint(const double* x, double* g) const override {
        std::fill(g, g + total_, 0.0);
        double ll = 0.0;

        for (std::size_t k = 0; k < gamma_scratch_.size(); ++k)
            gamma_scratch_[k] = std::exp(x[u_off_ + k]);
        for (std::size_t k = 0; k < lambda_scratch_.size(); ++k)
            lambda_scratch_[k] = sigmoid(x[v_off_ + k]);

        switch (kind_) {
            case ModelKind::OnePL: {
                for (std::size_t i = 0; i < n_; ++i) {
                    const double th = x[theta_off_ + i];
                    double gth = 0.0;
                    const std::uint8_t* zrow = z_.data() + i * m_;
                    for (std::size_t j = 0; j < m_; ++j) {
                        const double a = th - x[b_off_ + j];
                        ll -= zrow[j] ? softplus(-a) : softplus(a);
                        const double grad = zrow[j] - sigmoid(a);
                        gth += grad;
                        g[b_off_ + j] -= grad;
                    }
                    g[theta_off_ + i] += gth;
                }
                break;
            }
            case ModelKind::TwoPL: {
                for (std::size_t i = 0; i < n_; ++i) {
                    const double th = x[theta_off_ + i];
                    double gth = 0.0;
                    const std::uint8_t* zrow = z_.data() + i * m_;
                    for (std::size_t j = 0; j < m_; ++j) {
                        const double gam = gamma_scratch_[j];
                        const double a = gam * (th - x[b_off_ + j]);
                        ll -= zrow[j] ? softplus(-a) : softplus(a);
                        const double grad = zrow[j] - sigmoid(a);
                        gth += grad * gam;
                        g[b_off_ + j] -= grad * gam;
                        g[u_off_ + j] += grad * a;
                    }
                    g[theta_off_ + i] += gth;
                }
                break;
            }
            case ModelKind::ThreePL: {
                for (std::size_t i = 0; i < n_; ++i) {
                    const double th = x[theta_off_ + i];
                    double gth = 0.0;
                    const std::uint8_t* zrow = z_.data() + i * m_;
                    for (std::size_t j = 0; j < m_; ++j) {
                        const double gam = gamma_scratch_[j];
                        const double lam = lambda_scratch_[j];
                        const double a = gam * (th - x[b_off_ + j]);
                        const double s = sigmoid(a);
                        double da, dv;
                        if (zrow[j]) {
                            const double p = std::max(lam + (1.0 - lam) * s, 1e-300);
                            ll += std::log(p);
                            da = (1.0 - lam) * s * (1.0 - s) / p;
                            dv = (1.0 - s) / p * lam * (1.0 - lam);
                        } else {
                            // log(1-p) = log(1-lam) + log(1-s)
                            ll -= softplus(x[v_off_ + j]) + softplus(a);
                            da = -s;
                            dv = -lam;
                        }
                        gth += da * gam;
                        g[b_off_ + j] -= da * gam;
                        g[u_off_ + j] += da * a;
                        g[v_off_ + j] += dv;
                    }
                    g[theta_off_ + i] += gth;
                }
                break;
            }
            case ModelKind::MultiDim2PL: {
                for (std::size_t i = 0; i < n_; ++i) {
                    const double* th = x + theta_off_ + i * d_;
                    const std::uint8_t* zrow = z_.data() + i * m_;
                    for (std::size_t j = 0; j < m_; ++j) {
                        const double* b = x + b_off_ + j * d_;
                        const double* gam = gamma_scratch_.data() + j * d_;
                        double a = 0.0;
                        for (std::size_t dd = 0; dd < d_; ++dd)
                            a += gam[dd] * (th[dd] - b[dd]);
                        ll -= zrow[j] ? softplus(-a) : softplus(a);
                        const double grad = zrow[j] - sigmoid(a);
                        for (std::size_t dd = 0; dd < d_; ++dd) {
                            g[theta_off_ + i * d_ + dd] += grad * gam[dd];
                            g[b_off_ + j * d_ + dd] -= grad * gam[dd];
                            g[u_off_ + j * d_ + dd] += grad * gam[dd] * (th[dd] - b[dd]);
                        }
                    }
                }
                break;
            }
            default:
                throw std::logic_error("ResponseObjective: bad kind");
        }

        std::size_t h = hyper_off_;
        add_family_prior(x, g, theta_off_, n_ * d_, h, h + 1, priors_.theta, ll);
        h += 2;
        add_family_prior(x, g, b_off_, m_ * d_, h, h + 1, priors_.difficulty, ll);
        h += 2;
        if (has_item_gamma(kind_)) {
            add_family_prior(x, g, u_off_, m_ * d_, h, h + 1, priors_.log_gamma, ll);
            h += 2;
        }
        if (has_guessing(kind_)) {
            // Uniform[0,1] prior on lambda expressed in logit space:
            // log p(v) = log sigma(v) + log sigma(-v).
            for (std::size_t j = 0; j < m_; ++j) {
                const double v = x[v_off_ + j];
                ll -= softplus(v) + softplus(-v);
                g[v_off_ + j] += 1.0 - 2.0 * lambda_scratch_[j];
            }
        }
        return ll;
    }

  private:
    const std::vector<std::uint8_t>& z_;
    ModelKind kind_;
    std::size_t n_, m_, d_;
    HyperPriors priors_;
    std::size_t theta_off_, b_off_, u_off_, v_off_, hyper_off_, total_;
    std::size_t n_hyper_families_;
    mutable std::vector<double> gamma_scratch_, lambda_scratch_;
};

// Continuous confidence model: Beta(m,n) with m = exp(g*(theta-b)/2), n = 1/m,
// optionally times the 1PL Bernoulli response likelihood (joint kind) and
// optionally with a per-model log-normal gamma scaling (joint kind).
class ConfidenceObjective : public Objective {
  public:
    ConfidenceObjective(const ResponseMatrix* resp, const ConfidenceMatrix& conf,
                        const HyperPriors& priors, bool with_model_gamma)
        : resp_(resp),
          n_(conf.n_models()),
          m_(conf.n_items()),
          with_gamma_(with_model_gamma),
          priors_(priors) {
        logc_.resize(n_ * m_);
        log1c_.resize(n_ * m_);
        for (std::size_t k = 0; k < logc_.size(); ++k) {
            const double c = std::clamp(conf.cells()[k], 1e-6, 1.0 - 1e-6);
            logc_[k] = std::log(c);
            log1c_[k] = std::log1p(-c);
        }
        theta_off_ = 0;
        b_off_ = n_;
        ug_off_ = b_off_ + m_;
        hyper_off_ = ug_off_ + (with_gamma_ ? n_ : 0);
        n_hyper_families_ = with_gamma_ ? 3 : 2;
        total_ = hyper_off_ + 2 * n_hyper_families_;
    }

    std::size_t size() const override { return total_; }
    std::size_t theta_off() const { return theta_off_; }
    std::size_t b_off() const { return b_off_; }
    std::size_t ug_off() const { return ug_off_; }
    std::size_t hyper_off() const { return hyper_off_; }
    std::size_t hyper_families() const { return n_hyper_families_; }

    double log_joint(const double* x, double* g) const override {
        std::fill(g, g + total_, 0.0);
        double ll = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double th = x[theta_off_ + i];
            const double gam = with_gamma_ ? std::exp(x[ug_off_ + i]) : 1.0;
            double gth = 0.0, gug = 0.0;
            for (std::size_t j = 0; j < m_; ++j) {
                const double diff = th - x[b_off_ + j];
                double t = 0.5 * gam * diff;
                t = std::clamp(t, -200.0, 200.0);
                const double em = std::exp(t);
                const double en = std::exp(-t);
                const std::size_t k = i * m_ + j;
                ll += std::lgamma(em + en) - std::lgamma(em) - std::lgamma(en) +
                      (em - 1.0) * logc_[k] + (en - 1.0) * log1c_[k];
                const double dsum = digamma(em + en);
                const double dm = dsum - digamma(em) + logc_[k];
                const double dn = dsum - digamma(en) + log1c_[k];
                const double dt = em * dm - en * dn;
                gth += dt * 0.5 * gam;
                g[b_off_ + j] -= dt * 0.5 * gam;
                gug += dt * t;

                if (resp_) {
                    const double z = resp_->cell(i, j);
                    ll -= z ? softplus(-diff) : softplus(diff);
                    const double grad = z - sigmoid(diff);
                    gth += grad;
                    g[b_off_ + j] -= grad;
                }
            }
            g[theta_off_ + i] += gth;
            if (with_gamma_) g[ug_off_ + i] += gug;
        }

        std::size_t h = hyper_off_;
        add_family_prior(x, g, theta_off_, n_, h, h + 1, priors_.theta, ll);
        h += 2;
        add_family_prior(x, g, b_off_, m_, h, h + 1, priors_.difficulty, ll);
        h += 2;
        if (with_gamma_) add_family_prior(x, g, ug_off_, n_, h, h + 1, priors_.log_gamma, ll);
        return ll;
    }

  private:
    const ResponseMatrix* resp_;
    std::size_t n_, m_;
    bool with_gamma_;
    HyperPriors priors_;
    std::vector<double> logc_, log1c_;
    std::size_t theta_off_, b_off_, ug_off_, hyper_off_, total_;
    std::size_t n_hyper_families_;
};

// New-item difficulties against the confidence likelihood with theta and
// gamma frozen; the difficulty prior uses the frozen hyperparameter means.
class FrozenDifficultyObjective : public Objective {
  public:
    FrozenDifficultyObjective(std::vector<double> theta, std::vector<double> gamma,
                              const ConfidenceMatrix& conf, double mu_b, double tau_b)
        : theta_(std::move(theta)),
          gamma_(std::move(gamma)),
          n_(conf.n_models()),
          m_(conf.n_items()),
          mu_b_(mu_b),
          tau_b_(tau_b) {
        logc_.resize(n_ * m_);
        log1c_.resize(n_ * m_);
        for (std::size_t k = 0; k < logc_.size(); ++k) {
            const double c = std::clamp(conf.cells()[k], 1e-6, 1.0 - 1e-6);
            logc_[k] = std::log(c);
            log1c_[k] = std::log1p(-c);
        }
    }

    std::size_t size() const override { return m_; }

    double log_joint(const double* x, double* g) const override {
        std::fill(g, g + m_, 0.0);
        double ll = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double th = theta_[i];
            const double gam = gamma_[i];
            for (std::size_t j = 0; j < m_; ++j) {
                double t = 0.5 * gam * (th - x[j]);
                t = std::clamp(t, -200.0, 200.0);
                const double em = std::exp(t);
                const double en = std::exp(-t);
                const std::size_t k = i * m_ + j;
                ll += std::lgamma(em + en) - std::lgamma(em) - std::lgamma(en) +
                      (em - 1.0) * logc_[k] + (en - 1.0) * log1c_[k];
                const double dsum = digamma(em + en);
                const double dt = em * (dsum - digamma(em) + logc_[k]) -
                                  en * (dsum - digamma(en) + log1c_[k]);
                g[j] -= dt * 0.5 * gam;
            }
        }
        for (std::size_t j = 0; j < m_; ++j) {
            const double d = x[j] - mu_b_;
            ll += 0.5 * std::log(tau_b_) - 0.5 * kLog2Pi - 0.5 * tau_b_ * d * d;
            g[j] += -tau_b_ * d;
        }
        return ll;
    }

  private:
    std::vector<double> theta_, gamma_;
    std::size_t n_, m_;
    double mu_b_, tau_b_;
    std::vector<double> logc_, log1c_;
};

struct SviResult {
    std::vector<VarParam> params;
    int steps = 0;
    double final_elbo = 0.0;
};

// Adam-ascent SVI loop with reparameterized gradients and closed-form
// Gaussian entropy. Fully sequential and seed-deterministic.
SviResult run_svi(const Objective& obj, std::vector<VarParam> vp,
                  const FitConfig& cfg, std::vector<double>* trace_out) {
    const std::size_t K = obj.size();
    if (vp.size() != K) throw std::logic_error("run_svi: bad init size");
    const int S = cfg.mc_samples;
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

    std::vector<double> sigma(K), x(K), gx(K), eps(S * K);
    std::vector<double> gloc(K), graw(K);
    std::vector<double> m_loc(K, 0.0), v_loc(K, 0.0), m_raw(K, 0.0), v_raw(K, 0.0);
    std::vector<double> trace;
    trace.reserve(cfg.epochs);

    Rng rng(cfg.seed);
    double b1t = 1.0, b2t = 1.0;
    const double lr = cfg.learning_rate;

    int step = 0;
    for (; step < cfg.epochs; ++step) {
        for (auto& e : eps) e = rng.normal();
        std::fill(gloc.begin(), gloc.end(), 0.0);
        std::fill(graw.begin(), graw.end(), 0.0);

        double entropy = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            sigma[k] = softplus(vp[k].raw);
            entropy += kHalfLog2PiE + std::log(sigma[k]);
        }

        double lj_acc = 0.0;
        for (int s = 0; s < S; ++s) {
            const double* es = eps.data() + s * K;
            for (std::size_t k = 0; k < K; ++k) x[k] = vp[k].loc + sigma[k] * es[k];
            const double lj = obj.log_joint(x.data(), gx.data());
            if (!std::isfinite(lj))
                throw FitError("non-finite ELBO contribution at step " + std::to_string(step),
                               step);
            lj_acc += lj;
            for (std::size_t k = 0; k < K; ++k) {
                gloc[k] += gx[k];
                graw[k] += gx[k] * es[k] * sigmoid(vp[k].raw);
            }
        }
        const double elbo = lj_acc / S + entropy;
        trace.push_back(elbo);

        b1t *= b1;
        b2t *= b2;
        for (std::size_t k = 0; k < K; ++k) {
            double gl = gloc[k] / S;
            double gr = graw[k] / S + sigmoid(vp[k].raw) / sigma[k];
            if (!std::isfinite(gl) || !std::isfinite(gr))
                throw FitError("non-finite gradient at step " + std::to_string(step), step);
            m_loc[k] = b1 * m_loc[k] + (1.0 - b1) * gl;
            v_loc[k] = b2 * v_loc[k] + (1.0 - b2) * gl * gl;
            m_raw[k] = b1 * m_raw[k] + (1.0 - b1) * gr;
            v_raw[k] = b2 * v_raw[k] + (1.0 - b2) * gr * gr;
            vp[k].loc += lr * (m_loc[k] / (1.0 - b1t)) /
                         (std::sqrt(v_loc[k] / (1.0 - b2t)) + adam_eps);
            vp[k].raw += lr * (m_raw[k] / (1.0 - b1t)) /
                         (std::sqrt(v_raw[k] / (1.0 - b2t)) + adam_eps);
        }

        if (cfg.convergence) {
            const int w = cfg.convergence->window;
            const int t = static_cast<int>(trace.size());
            if (t >= 2 * w) {
                double ma_new = 0.0, ma_old = 0.0;
                for (int k = t - w; k < t; ++k) ma_new += trace[k];
                for (int k = t - 2 * w; k < t - w; ++k) ma_old += trace[k];
                ma_new /= w;
                ma_old /= w;
                if (std::abs(ma_new - ma_old) <
                    cfg.convergence->rel_tol * std::max(1.0, std::abs(ma_new))) {
                    ++step;
                    break;
                }
            }
        }
    }

    if (trace_out) *trace_out = trace;
    SviResult res;
    res.params = std::move(vp);
    res.steps = step;
    res.final_elbo = trace.empty() ? 0.0 : trace.back();
    return res;
}

std::vector<VarParam> fresh_init(const Objective& obj, std::size_t theta_cnt,
                                 std::size_t b_cnt) {
    // locations 0; scales 1 for theta/b, 0.5 for transformed blocks and hypers
    std::vector<VarParam> vp(obj.size());
    const double raw1 = raw_of_scale(1.0);
    const double raw05 = raw_of_scale(0.5);
    for (std::size_t k = 0; k < vp.size(); ++k) {
        vp[k].loc = 0.0;
        vp[k].raw = (k < theta_cnt + b_cnt) ? raw1 : raw05;
    }
    return vp;
}

Gaussian to_gaussian(const VarParam& p) { return {p.loc, softplus(p.raw)}; }

VarParam from_gaussian(const Gaussian& g) {
    if (!(g.scale > 0.0))
        throw std::invalid_argument("posterior scale must be strictly positive");
    return {g.loc, raw_of_scale(g.scale)};
}

void find_degenerate(const ResponseMatrix& matrix, FitMeta& meta) {
    for (std::size_t i = 0; i < matrix.n_models(); ++i) {
        std::size_t ones = 0;
        for (std::size_t j = 0; j < matrix.n_items(); ++j) ones += matrix.cell(i, j);
        if (ones == 0 || ones == matrix.n_items())
            meta.degenerate_models.push_back(matrix.model_ids()[i]);
    }
    for (std::size_t j = 0; j < matrix.n_items(); ++j) {
        std::size_t ones = 0;
        for (std::size_t i = 0; i < matrix.n_models(); ++i) ones += matrix.cell(i, j);
        if (ones == 0 || ones == matrix.n_models())
            meta.degenerate_items.push_back(matrix.item_ids()[j]);
    }
}

void require_non_degenerate(const ResponseMatrix& matrix) {
    bool any0 = false, any1 = false;
    for (std::uint8_t c : matrix.cells()) (c ? any1 : any0) = true;
    if (!any0 || !any1)
        throw std::invalid_argument(
            std::string("fit: response matrix is degenerate (every cell is ") +
            (any1 ? "1" : "0") + "); the latent scale is unidentified");
}

FitMeta make_meta(const FitConfig& cfg, const SviResult& res) {
    FitMeta meta;
    meta.seed = cfg.seed;
    meta.epochs = res.steps;
    meta.learning_rate = cfg.learning_rate;
    meta.mc_samples = cfg.mc_samples;
    meta.final_elbo = res.final_elbo;
    return meta;
}

// --- pack/unpack between FittedPosterior blocks and the latent layout ------

void pack_block(const std::vector<Gaussian>& block, std::vector<VarParam>& vp,
                std::size_t off) {
    for (std::size_t k = 0; k < block.size(); ++k) vp[off + k] = from_gaussian(block[k]);
}

void unpack_block(const std::vector<VarParam>& vp, std::size_t off, std::size_t cnt,
                  std::vector<Gaussian>& block) {
    block.resize(cnt);
    for (std::size_t k = 0; k < cnt; ++k) block[k] = to_gaussian(vp[off + k]);
}

FittedPosterior::HyperBlock unpack_hyper(const std::vector<VarParam>& vp, std::size_t off) {
    return {to_gaussian(vp[off]), to_gaussian(vp[off + 1])};
}

void pack_hyper(const FittedPosterior::HyperBlock& h, std::vector<VarParam>& vp,
                std::size_t off) {
    vp[off] = from_gaussian(h.mu);
    vp[off + 1] = from_gaussian(h.log_tau);
}

std::vector<VarParam> pack_response_posterior(const FittedPosterior& p,
                                              const ResponseObjective& obj) {
    std::vector<VarParam> vp(obj.size());
    pack_block(p.theta, vp, obj.theta_off());
    pack_block(p.difficulty, vp, obj.b_off());
    if (has_item_gamma(p.kind)) pack_block(p.log_gamma, vp, obj.u_off());
    if (has_guessing(p.kind)) pack_block(p.logit_lambda, vp, obj.v_off());
    std::size_t h = obj.hyper_off();
    pack_hyper(*p.hyper_theta, vp, h);
    pack_hyper(*p.hyper_difficulty, vp, h + 2);
    if (has_item_gamma(p.kind)) pack_hyper(*p.hyper_gamma, vp, h + 4);
    return vp;
}

std::vector<VarParam> pack_confidence_posterior(const FittedPosterior& p,
                                                const ConfidenceObjective& obj) {
    std::vector<VarParam> vp(obj.size());
    pack_block(p.theta, vp, obj.theta_off());
    pack_block(p.difficulty, vp, obj.b_off());
    if (has_model_gamma(p.kind)) pack_block(p.log_gamma_model, vp, obj.ug_off());
    std::size_t h = obj.hyper_off();
    pack_hyper(*p.hyper_theta, vp, h);
    pack_hyper(*p.hyper_difficulty, vp, h + 2);
    if (has_model_gamma(p.kind)) pack_hyper(*p.hyper_gamma, vp, h + 4);
    return vp;
}

double estimate_elbo_at(const Objective& obj, const std::vector<VarParam>& vp,
                        int mc_samples, std::uint64_t seed) {
    const std::size_t K = obj.size();
    Rng rng(seed);
    std::vector<double> x(K), gx(K);
    double entropy = 0.0;
    std::vector<double> sigma(K);
    for (std::size_t k = 0; k < K; ++k) {
        sigma[k] = softplus(vp[k].raw);
        entropy += kHalfLog2PiE + std::log(sigma[k]);
    }
    double acc = 0.0;
    for (int s = 0; s < mc_samples; ++s) {
        for (std::size_t k = 0; k < K; ++k) x[k] = vp[k].loc + sigma[k] * rng.normal();
        const double lj = obj.log_joint(x.data(), gx.data());
        if (!std::isfinite(lj))
            throw FitError("non-finite ELBO sample " + std::to_string(s), s);
        acc += lj;
    }
    return acc / mc_samples + entropy;
}

double check_gradients_at(const Objective& obj, const std::vector<VarParam>& vp0,
                          std::uint64_t seed, double h) {
    const std::size_t K = obj.size();
    constexpr int S = 2;
    Rng rng(seed);
    std::vector<double> eps(S * K);
    for (auto& e : eps) e = rng.normal();

    // deterministic ELBO under common random numbers
    std::vector<double> x(K), gx(K);
    auto value = [&](const std::vector<VarParam>& vp) {
        double acc = 0.0;
        for (int s = 0; s < S; ++s) {
            for (std::size_t k = 0; k < K; ++k)
                x[k] = vp[k].loc + softplus(vp[k].raw) * eps[s * K + k];
            acc += obj.log_joint(x.data(), gx.data());
        }
        double entropy = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            entropy += kHalfLog2PiE + std::log(softplus(vp[k].raw));
        return acc / S + entropy;
    };

    std::vector<double> gloc(K, 0.0), graw(K, 0.0);
    for (int s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < K; ++k)
            x[k] = vp0[k].loc + softplus(vp0[k].raw) * eps[s * K + k];
        obj.log_joint(x.data(), gx.data());
        for (std::size_t k = 0; k < K; ++k) {
            gloc[k] += gx[k] / S;
            graw[k] += gx[k] * eps[s * K + k] * sigmoid(vp0[k].raw) / S;
        }
    }
    for (std::size_t k = 0; k < K; ++k)
        graw[k] += sigmoid(vp0[k].raw) / softplus(vp0[k].raw);

    double worst = 0.0;
    std::vector<VarParam> vp = vp0;
    auto fd_against = [&](double analytic, double& slot) {
        const double saved = slot;
        slot = saved + h;
        const double fp = value(vp);
        slot = saved - h;
        const double fm = value(vp);
        slot = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double dev =
            std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
        worst = std::max(worst, dev);
    };
    for (std::size_t k = 0; k < K; ++k) {
        fd_against(gloc[k], vp[k].loc);
        fd_against(graw[k], vp[k].raw);
    }
    return worst;
}

}  // namespace

void FitConfig::validate() const {
    if (epochs <= 0) throw std::invalid_argument("FitConfig: epochs must be positive");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("FitConfig: learning_rate must be positive");
    if (mc_samples <= 0) throw std::invalid_argument("FitConfig: mc_samples must be positive");
    if (dim < 1) throw std::invalid_argument("FitConfig: dim must be >= 1");
    if (convergence) {
        if (convergence->window <= 0)
            throw std::invalid_argument("FitConfig: convergence window must be positive");
        if (!(convergence->rel_tol > 0.0))
            throw std::invalid_argument("FitConfig: convergence tolerance must be positive");
    }
}

void HyperPriors::validate() const {
    for (const FamilyPrior* f : {&theta, &difficulty, &log_gamma}) {
        if (!(f->mean.scale > 0.0))
            throw std::invalid_argument("HyperPriors: mean prior scale must be positive");
        if (!(f->precision.shape > 0.0) || !(f->precision.rate > 0.0))
            throw std::invalid_argument("HyperPriors: precision prior shape/rate must be positive");
    }
}

FittedPosterior fit(const ResponseMatrix& matrix, ModelKind kind, const FitConfig& config,
                    const HyperPriors& priors, std::vector<double>* elbo_trace) {
    config.validate();
    priors.validate();
    if (!is_discrete_kind(kind))
        throw std::invalid_argument(
            "fit: kind must be a discrete-response kind; use fit_joint/fit_beta for " +
            std::string(kind_name(kind)));
    if (kind != ModelKind::MultiDim2PL && config.dim != 1)
        throw std::invalid_argument("fit: dim > 1 requires the md2pl kind");
    require_non_degenerate(matrix);

    const int dim = kind == ModelKind::MultiDim2PL ? config.dim : 1;
    ResponseObjective obj(matrix, kind, dim, priors);
    const std::size_t d = static_cast<std::size_t>(dim);
    auto vp = fresh_init(obj, matrix.n_models() * d, matrix.n_items() * d);
    // transformed blocks start at scale 0.5, theta/b at 1
    const SviResult res = run_svi(obj, std::move(vp), config, elbo_trace);

    FittedPosterior p;
    p.kind = kind;
    p.dim = dim;
    p.model_ids = matrix.model_ids();
    p.item_ids = matrix.item_ids();
    unpack_block(res.params, obj.theta_off(), matrix.n_models() * d, p.theta);
    unpack_block(res.params, obj.b_off(), matrix.n_items() * d, p.difficulty);
    if (has_item_gamma(kind))
        unpack_block(res.params, obj.u_off(), matrix.n_items() * d, p.log_gamma);
    if (has_guessing(kind))
        unpack_block(res.params, obj.v_off(), matrix.n_items(), p.logit_lambda);
    std::size_t h = obj.hyper_off();
    p.hyper_theta = unpack_hyper(res.params, h);
    p.hyper_difficulty = unpack_hyper(res.params, h + 2);
    if (has_item_gamma(kind)) p.hyper_gamma = unpack_hyper(res.params, h + 4);
    p.fit = make_meta(config, res);
    find_degenerate(matrix, p.fit);
    p.validate();
    return p;
}

FittedPosterior fit_joint(const ResponseMatrix& matrix, const ConfidenceMatrix& conf,
                          const FitConfig& config, const HyperPriors& priors,
                          std::vector<double>* elbo_trace) {
    config.validate();
    priors.validate();
    check_aligned(matrix, conf);
    require_non_degenerate(matrix);

    ConfidenceObjective obj(&matrix, conf, priors, true);
    auto vp = fresh_init(obj, matrix.n_models(), matrix.n_items());
    const SviResult res = run_svi(obj, std::move(vp), config, elbo_trace);

    FittedPosterior p;
    p.kind = ModelKind::JointConfidence;
    p.model_ids = matrix.model_ids();
    p.item_ids = matrix.item_ids();
    unpack_block(res.params, obj.theta_off(), matrix.n_models(), p.theta);
    unpack_block(res.params, obj.b_off(), matrix.n_items(), p.difficulty);
    unpack_block(res.params, obj.ug_off(), matrix.n_models(), p.log_gamma_model);
    std::size_t h = obj.hyper_off();
    p.hyper_theta = unpack_hyper(res.params, h);
    p.hyper_difficulty = unpack_hyper(res.params, h + 2);
    p.hyper_gamma = unpack_hyper(res.params, h + 4);
    p.fit = make_meta(config, res);
    find_degenerate(matrix, p.fit);
    p.validate();
    return p;
}

FittedPosterior fit_beta(const ConfidenceMatrix& conf, const FitConfig& config,
                         const HyperPriors& priors, std::vector<double>* elbo_trace) {
    config.validate();
    priors.validate();

    ConfidenceObjective obj(nullptr, conf, priors, false);
    auto vp = fresh_init(obj, conf.n_models(), conf.n_items());
    const SviResult res = run_svi(obj, std::move(vp), config, elbo_trace);

    FittedPosterior p;
    p.kind = ModelKind::Beta;
    p.model_ids = conf.model_ids();
    p.item_ids = conf.item_ids();
    unpack_block(res.params, obj.theta_off(), conf.n_models(), p.theta);
    unpack_block(res.params, obj.b_off(), conf.n_items(), p.difficulty);
    std::size_t h = obj.hyper_off();
    p.hyper_theta = unpack_hyper(res.params, h);
    p.hyper_difficulty = unpack_hyper(res.params, h + 2);
    p.fit = make_meta(config, res);
    p.validate();
    return p;
}

std::vector<Gaussian> fit_difficulty_from_confidences(const FittedPosterior& frozen,
                                                      const ConfidenceMatrix& conf_new,
                                                      const FitConfig& config,
                                                      std::vector<double>* elbo_trace) {
    config.validate();
    if (frozen.kind != ModelKind::JointConfidence)
        throw std::invalid_argument(
            "fit_difficulty_from_confidences: frozen posterior must be a joint_confidence fit");
    frozen.validate();

    std::vector<double> theta(conf_new.n_models()), gamma(conf_new.n_models());
    for (std::size_t i = 0; i < conf_new.n_models(); ++i) {
        const std::size_t idx = frozen.model_index(conf_new.model_ids()[i]);
        theta[i] = frozen.theta_mean(idx);
        gamma[i] = frozen.gamma_model_mean(idx);
    }
    const double mu_b = frozen.hyper_difficulty->mu.loc;
    const double tau_b = frozen.tau_mean(*frozen.hyper_difficulty);

    FrozenDifficultyObjective obj(std::move(theta), std::move(gamma), conf_new, mu_b, tau_b);
    std::vector<VarParam> vp(obj.size(), {0.0, raw_of_scale(1.0)});
    const SviResult res = run_svi(obj, std::move(vp), config, elbo_trace);

    std::vector<Gaussian> out(res.params.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = to_gaussian(res.params[j]);
    return out;
}

namespace {

std::unique_ptr<Objective> objective_for(const FittedPosterior& posterior,
                                         const ResponseMatrix* matrix,
                                         const ConfidenceMatrix* conf,
                                         const HyperPriors& priors,
                                         std::vector<VarParam>& vp) {
    posterior.validate();
    if (is_discrete_kind(posterior.kind)) {
        if (!matrix)
            throw std::invalid_argument("a response matrix is required for kind " +
                                        std::string(kind_name(posterior.kind)));
        if (matrix->n_models() != posterior.n_models() ||
            matrix->n_items() != posterior.n_items())
            throw std::invalid_argument("posterior and matrix dimensions do not match");
        auto obj = std::make_unique<ResponseObjective>(*matrix, posterior.kind, posterior.dim,
                                                       priors);
        vp = pack_response_posterior(posterior, *obj);
        return obj;
    }
    if (!conf)
        throw std::invalid_argument("a confidence matrix is required for kind " +
                                    std::string(kind_name(posterior.kind)));
    if (conf->n_models() != posterior.n_models() || conf->n_items() != posterior.n_items())
        throw std::invalid_argument("posterior and confidence dimensions do not match");
    const bool joint = posterior.kind == ModelKind::JointConfidence;
    if (joint) {
        if (!matrix)
            throw std::invalid_argument("joint_confidence needs both matrices");
        check_aligned(*matrix, *conf);
    }
    auto obj = std::make_unique<ConfidenceObjective>(joint ? matrix : nullptr, *conf, priors,
                                                     joint);
    vp = pack_confidence_posterior(posterior, *obj);
    return obj;
}

}  // namespace

double elbo_estimate(const FittedPosterior& posterior, const ResponseMatrix* matrix,
                     const ConfidenceMatrix* conf, const HyperPriors& priors,
                     int mc_samples, std::uint64_t seed) {
    if (mc_samples <= 0) throw std::invalid_argument("elbo_estimate: mc_samples must be positive");
    priors.validate();
    std::vector<VarParam> vp;
    auto obj = objective_for(posterior, matrix, conf, priors, vp);
    return estimate_elbo_at(*obj, vp, mc_samples, seed);
}

double gradient_check(const FittedPosterior& posterior, const ResponseMatrix* matrix,
                      const ConfidenceMatrix* conf, const HyperPriors& priors,
                      std::uint64_t seed, double fd_step) {
    if (!(fd_step > 0.0)) throw std::invalid_argument("gradient_check: step must be positive");
    priors.validate();
    std::vector<VarParam> vp;
    auto obj = objective_for(posterior, matrix, conf, priors, vp);
    return check_gradients_at(*obj, vp, seed, fd_step);
}

}  // namespace irt::vi
