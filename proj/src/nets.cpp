#include "sisvae/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "sisvae/rng.hpp"

namespace sisvae {

namespace {

using ad::make_scalar;
using ad::make_vector;

void fill_uniform(Rng& rng, const TensorPtr& t, double bound) {
    for (double& v : t->values) v = rng.uniform(-bound, bound);
}

TensorPtr param(std::vector<std::size_t> shape) {
    auto t = ad::zeros(std::move(shape));
    t->requires_grad = true;
    return t;
}

FeatureMap shaped_feature_map(std::size_t in, std::size_t out) {
    return FeatureMap{param({out, in}), param({out})};
}

GaussHead shaped_head(std::size_t in, std::size_t hidden, std::size_t out) {
    return GaussHead{param({hidden, in}),  param({hidden}), param({out, hidden}),
                     param({out}),         param({out, hidden}), param({out})};
}

void init_linear(Rng& rng, const TensorPtr& w, const TensorPtr& b) {
    const double bound = std::sqrt(1.0 / static_cast<double>(w->shape[1]));
    fill_uniform(rng, w, bound);
    fill_uniform(rng, b, bound);
}

}  // namespace

void ModelConfig::validate() const {
    if (x_dim < 1 || h_dim < 1 || z_dim < 1 || feat_dim < 1) {
        throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
    }
    if (!(sigma_floor > 0.0) || sigma_floor > 1e-2) {
        throw std::invalid_argument("ModelConfig: sigma_floor must lie in (0, 1e-2]");
    }
}

std::vector<std::pair<std::string, TensorPtr>> ModelParams::named() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    auto push_map = [&](const std::string& p, const FeatureMap& f) {
        out.emplace_back(p + ".w", f.w);
        out.emplace_back(p + ".b", f.b);
    };
    auto push_head = [&](const std::string& p, const GaussHead& h) {
        out.emplace_back(p + ".w1", h.w1);
        out.emplace_back(p + ".b1", h.b1);
        out.emplace_back(p + ".w_mu", h.w_mu);
        out.emplace_back(p + ".b_mu", h.b_mu);
        out.emplace_back(p + ".w_sigma", h.w_sigma);
        out.emplace_back(p + ".b_sigma", h.b_sigma);
    };
    push_map("phi_x", phi_x);
    push_map("phi_z", phi_z);
    push_head("enc", enc);
    push_head("prior", prior);
    push_head("dec", dec);
    out.emplace_back("gru.w_r", gru.w_r);
    out.emplace_back("gru.u_r", gru.u_r);
    out.emplace_back("gru.b_r", gru.b_r);
    out.emplace_back("gru.w_s", gru.w_s);
    out.emplace_back("gru.u_s", gru.u_s);
    out.emplace_back("gru.b_s", gru.b_s);
    out.emplace_back("gru.w_h", gru.w_h);
    out.emplace_back("gru.u_h", gru.u_h);
    out.emplace_back("gru.b_h", gru.b_h);
    return out;
}

std::vector<TensorPtr> ModelParams::tensors() const {
    std::vector<TensorPtr> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

std::size_t ModelParams::param_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t->numel();
    return n;
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (const auto& t : tensors()) {
        flat.insert(flat.end(), t->values.begin(), t->values.end());
    }
    return flat;
}

ModelParams ModelParams::shaped(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    const std::size_t x = config.x_dim, h = config.h_dim, z = config.z_dim, f = config.feat_dim;
    p.phi_x = shaped_feature_map(x, f);
    p.phi_z = shaped_feature_map(z, f);
    p.enc = shaped_head(f + h, h, z);
    p.prior = shaped_head(h, h, z);
    p.dec = shaped_head(f + h, h, x);
    p.gru = GruParams{param({h, f}), param({h, h}), param({h}), param({h, f}), param({h, h}),
                      param({h}),    param({h, f}), param({h, h}), param({h})};
    return p;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p = shaped(config);
    Rng rng(seed);
    // uniform(-a, a) with a = sqrt(1/fan_in); biases share their layer's bound
    auto fill = [&](const TensorPtr& t, std::size_t fan_in) {
        fill_uniform(rng, t, std::sqrt(1.0 / static_cast<double>(fan_in)));
    };
    auto init_map = [&](FeatureMap& f) { init_linear(rng, f.w, f.b); };
    auto init_head = [&](GaussHead& g) {
        init_linear(rng, g.w1, g.b1);
        init_linear(rng, g.w_mu, g.b_mu);
        init_linear(rng, g.w_sigma, g.b_sigma);
    };
    init_map(p.phi_x);
    init_map(p.phi_z);
    init_head(p.enc);
    init_head(p.prior);
    init_head(p.dec);
    const std::size_t h = config.h_dim, f = config.feat_dim;
    fill(p.gru.w_r, f);
    fill(p.gru.u_r, h);
    fill(p.gru.b_r, h);
    fill(p.gru.w_s, f);
    fill(p.gru.u_s, h);
    fill(p.gru.b_s, h);
    fill(p.gru.w_h, f);
    fill(p.gru.u_h, h);
    fill(p.gru.b_h, h);
    return p;
}

ModelParams ModelParams::from_flat(const ModelConfig& config, const TensorPtr& flat) {
    ModelParams shapes = shaped(config);
    if (flat->numel() != shapes.param_count()) {
        throw std::invalid_argument("from_flat: expected " +
                                    std::to_string(shapes.param_count()) + " values, got " +
                                    std::to_string(flat->numel()));
    }
    ModelParams view = shapes;
    std::size_t off = 0;
    // named() enumerates the shape holders; replace each with a slice view.
    auto assign = [&](TensorPtr& slot) {
        const std::size_t n = slot->numel();
        auto piece = ad::slice(flat, off, off + n);
        slot = slot->shape.size() == 2 ? ad::reshape(piece, slot->shape) : piece;
        off += n;
    };
    auto assign_map = [&](FeatureMap& f) {
        assign(f.w);
        assign(f.b);
    };
    auto assign_head = [&](GaussHead& g) {
        assign(g.w1);
        assign(g.b1);
        assign(g.w_mu);
        assign(g.b_mu);
        assign(g.w_sigma);
        assign(g.b_sigma);
    };
    assign_map(view.phi_x);
    assign_map(view.phi_z);
    assign_head(view.enc);
    assign_head(view.prior);
    assign_head(view.dec);
    assign(view.gru.w_r);
    assign(view.gru.u_r);
    assign(view.gru.b_r);
    assign(view.gru.w_s);
    assign(view.gru.u_s);
    assign(view.gru.b_s);
    assign(view.gru.w_h);
    assign(view.gru.u_h);
    assign(view.gru.b_h);
    return view;
}

void zero_grad(ModelParams& params) {
    for (auto& t : params.tensors()) t->clear_grad();
}

TensorPtr feature_map(const FeatureMap& map, const TensorPtr& in) {
    return ad::tanh(ad::matmul(map.w, in) + map.b);
}

std::pair<TensorPtr, TensorPtr> gaussian_head(const ModelParams& params, HeadKind kind,
                                              const TensorPtr& in) {
    const GaussHead& head = kind == HeadKind::enc     ? params.enc
                            : kind == HeadKind::prior ? params.prior
                                                      : params.dec;
    auto hidden = ad::tanh(ad::matmul(head.w1, in) + head.b1);
    auto mu = ad::matmul(head.w_mu, hidden) + head.b_mu;
    auto raw = ad::matmul(head.w_sigma, hidden) + head.b_sigma;
    auto sigma = ad::softplus(raw) + make_scalar(params.config.sigma_floor);
    return {mu, sigma};
}

TensorPtr gru_step(const GruParams& gru, const TensorPtr& y, const TensorPtr& h_prev) {
    auto r = ad::sigmoid(ad::matmul(gru.w_r, y) + ad::matmul(gru.u_r, h_prev) + gru.b_r);
    auto s = ad::sigmoid(ad::matmul(gru.w_s, y) + ad::matmul(gru.u_s, h_prev) + gru.b_s);
    auto cand = ad::tanh(ad::matmul(gru.w_h, y) + r * ad::matmul(gru.u_h, h_prev) + gru.b_h);
    auto one = make_scalar(1.0);
    return (one - s) * cand + s * h_prev;
}

TensorPtr reparameterize(const TensorPtr& mu, const TensorPtr& sigma, const TensorPtr& eps) {
    if (mu->shape != sigma->shape || mu->shape != eps->shape) {
        throw std::invalid_argument("reparameterize: shapes differ: " + ad::shape_str(mu->shape) +
                                    ", " + ad::shape_str(sigma->shape) + ", " +
                                    ad::shape_str(eps->shape));
    }
    return mu + sigma * eps;
}

DiagGaussianSeq DistSeqNodes::values() const {
    DiagGaussianSeq seq;
    seq.length = mu.size();
    seq.dim = seq.length == 0 ? 0 : mu[0]->numel();
    seq.means.reserve(seq.length * seq.dim);
    seq.stddevs.reserve(seq.length * seq.dim);
    for (std::size_t t = 0; t < seq.length; ++t) {
        seq.means.insert(seq.means.end(), mu[t]->values.begin(), mu[t]->values.end());
        seq.stddevs.insert(seq.stddevs.end(), sigma[t]->values.begin(), sigma[t]->values.end());
    }
    return seq;
}

UnrollResult unroll(const ModelParams& params, const Chunk& x, const std::vector<double>& noise,
                    UnrollMode) {
    const ModelConfig& cfg = params.config;
    if (x.m != cfg.x_dim) {
        throw std::invalid_argument("unroll: chunk has " + std::to_string(x.m) +
                                    " series but the model expects " + std::to_string(cfg.x_dim));
    }
    if (noise.size() != x.w * cfg.z_dim) {
        throw std::invalid_argument("unroll: noise must be w * z_dim = " +
                                    std::to_string(x.w * cfg.z_dim) + " values, got " +
                                    std::to_string(noise.size()));
    }

    UnrollResult out;
    TensorPtr h = ad::zeros({cfg.h_dim});
    for (std::size_t t = 0; t < x.w; ++t) {
        auto x_t = make_vector(x.column(t));
        auto fx = feature_map(params.phi_x, x_t);
        auto [mu_z, sigma_z] = gaussian_head(params, HeadKind::enc, ad::concat_lastdim(fx, h));

        auto eps = make_vector(std::vector<double>(noise.begin() + t * cfg.z_dim,
                                                   noise.begin() + (t + 1) * cfg.z_dim));
        auto z = reparameterize(mu_z, sigma_z, eps);

        auto [mu_0, sigma_0] = gaussian_head(params, HeadKind::prior, h);

        auto fz = feature_map(params.phi_z, z);
        auto [mu_x, sigma_x] = gaussian_head(params, HeadKind::dec, ad::concat_lastdim(fz, h));

        h = gru_step(params.gru, fz, h);

        out.posterior.mu.push_back(mu_z);
        out.posterior.sigma.push_back(sigma_z);
        out.prior.mu.push_back(mu_0);
        out.prior.sigma.push_back(sigma_0);
        out.recon.mu.push_back(mu_x);
        out.recon.sigma.push_back(sigma_x);
        out.z_path.push_back(z);
        out.h_path.push_back(h);
    }
    return out;
}

}  // namespace sisvae
