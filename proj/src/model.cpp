#include "rhythmorph/model.hpp"

#include "rhythmorph/errors.hpp"

#include <algorithm>
#include <cmath>

namespace rhythmorph {

namespace {

Param& weight(ParamStore& s, const std::string& name, Eigen::Index r, Eigen::Index c, double scale,
              std::mt19937_64& rng) {
    Param& p = s.add(name, r, c, true);
    init_uniform(p.value, scale, rng);
    return p;
}

Param& bias(ParamStore& s, const std::string& name, Eigen::Index c, double value = 0.0) {
    Param& p = s.add(name, 1, c, false);
    p.value.setConstant(value);
    return p;
}

RowVector row(const Param* p) { return p->value.row(0); }

Matrix add_row(const Matrix& m, const Param* b) {
    return m.rowwise() + b->value.row(0);
}

}  // namespace

// ------------------------------------------------------------------ config

ModelConfig ModelConfig::desk() {
    return ModelConfig{};
}

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.d_model = 384;
    c.n_blocks = 16;
    c.branch_channels = 128;
    c.lead_dim = 32;
    return c;
}

void ModelConfig::validate() const {
    const auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (n_classes < 1) fail("n_classes must be >= 1");
    if (n_leads < 1) fail("n_leads must be >= 1");
    if (d_model < 1 || n_blocks < 0 || state_dim < 1 || expand < 1) fail("non-positive dimension");
    if (token_stride < 1 || slice_length < token_stride) fail("token_stride must be in [1, L]");
    if (slice_length % token_stride != 0) fail("slice length must be divisible by token_stride");
    if (branch_channels < 1) fail("branch_channels must be >= 1");
    for (int k : kernel_sizes)
        if (k < 1 || k % 2 == 0) fail("kernel sizes must be odd and positive");
    if (n_heads < 1 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (n_morph_tokens < 0 || hrv_dim < 1) fail("bad static token dimensions");
    if (lead_dim < 1 || lead_segments < 1 || lead_segments > slice_length) fail("bad lead attention dimensions");
    if (scan_chunk < 1) fail("scan_chunk must be >= 1");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"n_classes", n_classes},         {"n_leads", n_leads},
            {"slice_length", slice_length},   {"d_model", d_model},
            {"n_blocks", n_blocks},           {"state_dim", state_dim},
            {"expand", expand},               {"token_stride", token_stride},
            {"branch_channels", branch_channels}, {"kernel_sizes", kernel_sizes},
            {"n_heads", n_heads},             {"n_morph_tokens", n_morph_tokens},
            {"hrv_dim", hrv_dim},             {"lead_dim", lead_dim},
            {"lead_segments", lead_segments}, {"share_directions", share_directions},
            {"scan_chunk", scan_chunk},       {"norm_eps", norm_eps},
            {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.n_classes = j.at("n_classes");
        c.n_leads = j.at("n_leads");
        c.slice_length = j.at("slice_length");
        c.d_model = j.at("d_model");
        c.n_blocks = j.at("n_blocks");
        c.state_dim = j.at("state_dim");
        c.expand = j.at("expand");
        c.token_stride = j.at("token_stride");
        c.branch_channels = j.at("branch_channels");
        c.kernel_sizes = j.at("kernel_sizes").get<std::array<int, 3>>();
        c.n_heads = j.at("n_heads");
        c.n_morph_tokens = j.at("n_morph_tokens");
        c.hrv_dim = j.at("hrv_dim");
        c.lead_dim = j.at("lead_dim");
        c.lead_segments = j.at("lead_segments");
        c.share_directions = j.at("share_directions");
        c.scan_chunk = j.at("scan_chunk");
        c.norm_eps = j.at("norm_eps");
        c.seed = j.at("seed");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config json: ") + e.what());
    }
    c.validate();
    return c;
}

ModelVariant parse_variant(const std::string& name) {
    if (name == "full") return ModelVariant::full;
    if (name == "no_hrv") return ModelVariant::no_hrv;
    if (name == "no_backbone") return ModelVariant::no_backbone;
    if (name == "no_morph") return ModelVariant::no_morph;
    throw ConfigError("unknown variant '" + name + "'");
}

std::string variant_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::full: return "full";
        case ModelVariant::no_hrv: return "no_hrv";
        case ModelVariant::no_backbone: return "no_backbone";
        case ModelVariant::no_morph: return "no_morph";
    }
    return "full";
}

// ---------------------------------------------------------- lead attention

LeadAttention::LeadAttention(ParamStore& s, const std::string& prefix, int n_leads, int dim, int segments,
                             std::mt19937_64& rng)
    : n_leads_(n_leads), dim_(dim), segments_(segments) {
    const double a = 1.0 / std::sqrt(static_cast<double>(dim));
    w_sum = &weight(s, prefix + ".w_summary", 2 * segments, dim, 1.0 / std::sqrt(2.0 * segments), rng);
    b_sum = &bias(s, prefix + ".b_summary", dim);
    lead_embed = &weight(s, prefix + ".lead_embedding", n_leads, dim, 0.5, rng);
    w_q = &weight(s, prefix + ".w_q", dim, dim, a, rng);
    w_k = &weight(s, prefix + ".w_k", dim, dim, a, rng);
    w_v = &weight(s, prefix + ".w_v", dim, dim, a, rng);
    w_gate = &weight(s, prefix + ".w_gate", dim, 1, a, rng);
    b_gate = &bias(s, prefix + ".b_gate", 1);
    gate_bias = &s.add(prefix + ".lead_gate_bias", n_leads, 1, false);
}

LeadAttention::Output LeadAttention::forward(const Signal& x, Cache* cache) const {
    if (x.rows() != n_leads_) throw DataError(DataErrc::shape_mismatch, "lead_attention: wrong lead count");
    const Eigen::Index L = x.cols();
    Matrix summary(n_leads_, 2 * segments_);
    for (int i = 0; i < segments_; ++i) {
        const Eigen::Index lo = i * L / segments_, hi = (i + 1) * L / segments_;
        const auto len = static_cast<double>(std::max<Eigen::Index>(1, hi - lo));
        for (int l = 0; l < n_leads_; ++l) {
            const auto seg = x.row(l).segment(lo, hi - lo);
            summary(l, 2 * i) = seg.sum() / len;
            summary(l, 2 * i + 1) = seg.squaredNorm() / len;
        }
    }
    const Matrix e = add_row(summary * w_sum->value, b_sum) + lead_embed->value;
    const Matrix q = e * w_q->value, k = e * w_k->value, v = e * w_v->value;
    const Matrix attn = softmax_rows(q * k.transpose() / std::sqrt(static_cast<double>(dim_)));
    const Matrix r = attn * v + e;
    const Vector logit = (r * w_gate->value).col(0).array() + b_gate->value(0, 0) + gate_bias->value.col(0).array();
    Output out;
    out.alpha = logit.unaryExpr([](double z) { return sigmoid(z); });
    out.y = x.array().colwise() * out.alpha.array();
    if (cache) {
        cache->x = x;
        cache->summary = summary;
        cache->e = e;
        cache->q = q;
        cache->k = k;
        cache->v = v;
        cache->attn = attn;
        cache->r = r;
        cache->alpha = out.alpha;
    }
    return out;
}

Signal LeadAttention::backward(const Cache& c, const Signal& dy) {
    const Eigen::Index L = c.x.cols();
    const Vector dalpha = (dy.array() * c.x.array()).rowwise().sum();
    const Vector dlogit = dalpha.array() * c.alpha.array() * (1.0 - c.alpha.array());
    gate_bias->grad.col(0) += dlogit;
    b_gate->grad(0, 0) += dlogit.sum();
    w_gate->grad += c.r.transpose() * dlogit;
    const Matrix dr = dlogit * w_gate->value.transpose();
    Matrix de = dr;
    const Matrix dattn = dr * c.v.transpose();
    const Matrix dv = c.attn.transpose() * dr;
    const Matrix dlog = softmax_rows_backward(c.attn, dattn) / std::sqrt(static_cast<double>(dim_));
    const Matrix dq = dlog * c.k;
    const Matrix dk = dlog.transpose() * c.q;
    w_q->grad += c.e.transpose() * dq;
    w_k->grad += c.e.transpose() * dk;
    w_v->grad += c.e.transpose() * dv;
    de += dq * w_q->value.transpose() + dk * w_k->value.transpose() + dv * w_v->value.transpose();
    lead_embed->grad += de;
    b_sum->grad += de.colwise().sum();
    w_sum->grad += c.summary.transpose() * de;
    const Matrix ds = de * w_sum->value.transpose();

    Signal dx = dy.array().colwise() * c.alpha.array();
    for (int i = 0; i < segments_; ++i) {
        const Eigen::Index lo = i * L / segments_, hi = (i + 1) * L / segments_;
        const auto len = static_cast<double>(std::max<Eigen::Index>(1, hi - lo));
        for (int l = 0; l < n_leads_; ++l) {
            auto seg = dx.row(l).segment(lo, hi - lo);
            seg.array() += ds(l, 2 * i) / len + (2.0 * ds(l, 2 * i + 1) / len) * c.x.row(l).segment(lo, hi - lo).array();
        }
    }
    return dx;
}

// --------------------------------------------------------------- tokenizer

Tokenizer::Tokenizer(ParamStore& s, const std::string& prefix, int n_leads, std::array<int, 3> kernels,
                     int branch_channels, int stride, int d_model, std::mt19937_64& rng)
    : n_leads_(n_leads), kernels_(kernels), channels_(branch_channels), stride_(stride), d_model_(d_model) {
    for (int b = 0; b < 3; ++b) {
        const std::string tag = prefix + ".k" + std::to_string(kernels[static_cast<std::size_t>(b)]);
        const int fan_in = n_leads * kernels[static_cast<std::size_t>(b)];
        w_branch[static_cast<std::size_t>(b)] =
            &weight(s, tag + ".w", fan_in, branch_channels, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
        b_branch[static_cast<std::size_t>(b)] = &bias(s, tag + ".b", branch_channels);
    }
    w_proj = &weight(s, prefix + ".w_proj", 3 * branch_channels, d_model,
                     1.0 / std::sqrt(3.0 * branch_channels), rng);
    b_proj = &bias(s, prefix + ".b_proj", d_model);
}

Matrix Tokenizer::im2col(const Signal& x, int branch) const {
    const int k = kernels_[static_cast<std::size_t>(branch)];
    const Eigen::Index L = x.cols(), T = L / stride_;
    Matrix col = Matrix::Zero(T, n_leads_ * k);
    for (Eigen::Index t = 0; t < T; ++t) {
        const Eigen::Index centre = t * stride_ + stride_ / 2;
        for (int l = 0; l < n_leads_; ++l)
            for (int j = 0; j < k; ++j) {
                const Eigen::Index pos = centre + j - (k - 1) / 2;
                if (pos >= 0 && pos < L) col(t, l * k + j) = x(l, pos);
            }
    }
    return col;
}

Matrix Tokenizer::forward(const Signal& x, Cache* cache) const {
    if (x.rows() != n_leads_) throw DataError(DataErrc::shape_mismatch, "tokenize: wrong lead count");
    if (x.cols() % stride_ != 0) {
        throw DataError(DataErrc::shape_mismatch, "tokenize: length not divisible by token stride");
    }
    const Eigen::Index T = x.cols() / stride_;
    Matrix pre(T, 3 * channels_);
    std::array<Matrix, 3> cols;
    for (int b = 0; b < 3; ++b) {
        auto& cb = cols[static_cast<std::size_t>(b)];
        cb = im2col(x, b);
        pre.middleCols(b * channels_, channels_) =
            add_row(cb * w_branch[static_cast<std::size_t>(b)]->value, b_branch[static_cast<std::size_t>(b)]);
    }
    Matrix act = silu(pre);
    Matrix tokens = add_row(act * w_proj->value, b_proj);
    if (cache) {
        cache->cols = std::move(cols);
        cache->pre = std::move(pre);
        cache->act = std::move(act);
        cache->length = x.cols();
    }
    return tokens;
}

Signal Tokenizer::backward(const Cache& c, const Matrix& dtok) {
    w_proj->grad += c.act.transpose() * dtok;
    b_proj->grad += dtok.colwise().sum();
    const Matrix dpre = (dtok * w_proj->value.transpose()).array() *
                        c.pre.unaryExpr([](double v) { return silu_grad(v); }).array();
    const Eigen::Index T = dtok.rows(), L = c.length;
    Signal dx = Signal::Zero(n_leads_, L);
    for (int b = 0; b < 3; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        const Matrix db = dpre.middleCols(b * channels_, channels_);
        w_branch[bi]->grad += c.cols[bi].transpose() * db;
        b_branch[bi]->grad += db.colwise().sum();
        const Matrix dcol = db * w_branch[bi]->value.transpose();
        const int k = kernels_[bi];
        for (Eigen::Index t = 0; t < T; ++t) {
            const Eigen::Index centre = t * stride_ + stride_ / 2;
            for (int l = 0; l < n_leads_; ++l)
                for (int j = 0; j < k; ++j) {
                    const Eigen::Index pos = centre + j - (k - 1) / 2;
                    if (pos >= 0 && pos < L) dx(l, pos) += dcol(t, l * k + j);
                }
        }
    }
    return dx;
}

// ---------------------------------------------------- selective scan mixer

SelectiveDirection::SelectiveDirection(ParamStore& s, const std::string& prefix, int d_model, int inner, int state_dim,
                               std::mt19937_64& rng)
    : inner_(inner) {
    const double ai = 1.0 / std::sqrt(static_cast<double>(inner));
    w_in = &weight(s, prefix + ".w_in", d_model, 2 * inner, 1.0 / std::sqrt(static_cast<double>(d_model)), rng);
    w_dt = &weight(s, prefix + ".w_dt", inner, inner, 0.1 * ai, rng);
    b_dt = &bias(s, prefix + ".b_dt", inner);
    std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
    for (int e = 0; e < inner; ++e) {
        const double dt = std::exp(log_dt(rng));
        b_dt->value(0, e) = dt + std::log(-std::expm1(-dt));  // softplus^-1
    }
    w_b = &weight(s, prefix + ".w_b", inner, state_dim, ai, rng);
    w_c = &weight(s, prefix + ".w_c", inner, state_dim, ai, rng);
    a_log = &s.add(prefix + ".a_log", inner, state_dim, false);
    for (int n = 0; n < state_dim; ++n) a_log->value.col(n).setConstant(std::log(n + 1.0));
    d_skip = &bias(s, prefix + ".d_skip", inner, 1.0);
    w_out = &weight(s, prefix + ".w_out", inner, d_model, ai, rng);
}

Matrix SelectiveDirection::forward(const Matrix& x, Cache* cache, const ScanOptions& options) const {
    const Matrix xz = x * w_in->value;
    const Matrix xr = xz.leftCols(inner_), z = xz.rightCols(inner_);
    const Matrix u = silu(xr);
    const Matrix dt_pre = add_row(u * w_dt->value, b_dt);
    ScanParams sp;
    sp.delta = dt_pre.unaryExpr([](double v) { return softplus(v); });
    sp.B = u * w_b->value;
    sp.C = u * w_c->value;
    sp.A = -a_log->value.array().exp();
    std::vector<double> local;
    std::vector<double>* states = cache ? &cache->states : &local;
    const Matrix y_scan = ssm_scan(u, sp, ScanDirection::forward, options, cache ? states : nullptr);
    const Matrix y = y_scan + (u.array().rowwise() * d_skip->value.row(0).array()).matrix();
    const Matrix gz = silu(z);
    const Matrix out = (y.array() * gz.array()).matrix() * w_out->value;
    if (cache) {
        cache->x_in = x;
        cache->xr = xr;
        cache->z = z;
        cache->u = u;
        cache->dt_pre = dt_pre;
        cache->y_scan = y_scan;
        cache->y = y;
        cache->gz = gz;
        cache->scan = std::move(sp);
    }
    return out;
}

Matrix SelectiveDirection::backward(const Cache& c, const Matrix& dout) {
    const Matrix yg = c.y.array() * c.gz.array();
    w_out->grad += yg.transpose() * dout;
    const Matrix dyg = dout * w_out->value.transpose();
    const Matrix dy = dyg.array() * c.gz.array();
    const Matrix dz = (dyg.array() * c.y.array()) * c.z.unaryExpr([](double v) { return silu_grad(v); }).array();
    d_skip->grad += (dy.array() * c.u.array()).colwise().sum().matrix();
    Matrix du = dy.array().rowwise() * d_skip->value.row(0).array();

    const ScanGrads g = ssm_scan_backward(c.u, c.scan, ScanDirection::forward, c.states, dy);
    du += g.du;
    const Matrix ddt_pre = g.ddelta.array() * c.dt_pre.unaryExpr([](double v) { return sigmoid(v); }).array();
    w_dt->grad += c.u.transpose() * ddt_pre;
    b_dt->grad += ddt_pre.colwise().sum();
    du += ddt_pre * w_dt->value.transpose();
    w_b->grad += c.u.transpose() * g.dB;
    du += g.dB * w_b->value.transpose();
    w_c->grad += c.u.transpose() * g.dC;
    du += g.dC * w_c->value.transpose();
    a_log->grad += (g.dA.array() * c.scan.A.array()).matrix();

    Matrix dxz(dout.rows(), 2 * inner_);
    dxz.leftCols(inner_) = du.array() * c.xr.unaryExpr([](double v) { return silu_grad(v); }).array();
    dxz.rightCols(inner_) = dz;
    w_in->grad += c.x_in.transpose() * dxz;
    return dxz * w_in->value.transpose();
}

// ---------------------------------------------------------------- bi-block

BiBlock::BiBlock(ParamStore& s, const std::string& prefix, int d_model, int inner, int state_dim, bool share,
                 std::mt19937_64& rng)
    : share_(share) {
    norm_gain = &bias(s, prefix + ".norm", d_model, 1.0);
    fwd_ = std::make_unique<SelectiveDirection>(s, prefix + (share ? ".mixer" : ".fwd"), d_model, inner, state_dim, rng);
    if (!share) bwd_ = std::make_unique<SelectiveDirection>(s, prefix + ".bwd", d_model, inner, state_dim, rng);
    w_gate = &weight(s, prefix + ".w_gate", 2 * d_model, d_model, 1.0 / std::sqrt(2.0 * d_model), rng);
    b_gate = &bias(s, prefix + ".b_gate", d_model);
}

BiBlock::Output BiBlock::forward(const Matrix& h, Cache* cache, const ScanOptions& options, double eps) const {
    const SelectiveDirection& f = *fwd_;
    const SelectiveDirection& b = share_ ? *fwd_ : *bwd_;
    const Matrix hn = rms_norm(h, row(norm_gain), eps, cache ? &cache->norm : nullptr);
    Output out;
    out.h_fwd = f.forward(hn, cache ? &cache->fwd : nullptr, options);
    out.h_bwd = flip_rows(b.forward(flip_rows(hn), cache ? &cache->bwd : nullptr, options));
    Matrix cat(h.rows(), 2 * h.cols());
    cat << out.h_fwd, out.h_bwd;
    const Matrix gate = sigmoid(add_row(cat * w_gate->value, b_gate));
    out.mix = (gate.array() * out.h_fwd.array() + (1.0 - gate.array()) * out.h_bwd.array()).matrix();
    out.out = h + out.mix;
    if (cache) {
        cache->hf = out.h_fwd;
        cache->hb = out.h_bwd;
        cache->cat = std::move(cat);
        cache->gate = gate;
    }
    return out;
}

Matrix BiBlock::backward(const Cache& c, const Matrix& dout, double /*eps*/) {
    const Eigen::Index D = dout.cols();
    const Matrix dgate = dout.array() * (c.hf.array() - c.hb.array());
    Matrix dhf = dout.array() * c.gate.array();
    Matrix dhb = dout.array() * (1.0 - c.gate.array());
    const Matrix dg_pre = dgate.array() * c.gate.array() * (1.0 - c.gate.array());
    w_gate->grad += c.cat.transpose() * dg_pre;
    b_gate->grad += dg_pre.colwise().sum();
    const Matrix dcat = dg_pre * w_gate->value.transpose();
    dhf += dcat.leftCols(D);
    dhb += dcat.rightCols(D);
    Matrix dhn = forward_dir().backward(c.fwd, dhf);
    dhn += flip_rows(backward_dir().backward(c.bwd, flip_rows(dhb)));
    RowVector dgain = RowVector::Zero(D);
    Matrix dh = rms_norm_backward(c.norm, row(norm_gain), dhn, dgain);
    norm_gain->grad.row(0) += dgain;
    return dout + dh;
}

// ------------------------------------------------------------------ fusion

CrossModalFusion::CrossModalFusion(ParamStore& s, const std::string& prefix, int d_model, int n_heads, int n_morph,
                                   int hrv_dim, std::mt19937_64& rng)
    : d_model_(d_model), n_heads_(n_heads), n_morph_(n_morph), hrv_dim_(hrv_dim) {
    const double a = 1.0 / std::sqrt(static_cast<double>(d_model));
    w_hrv = &weight(s, prefix + ".w_hrv", hrv_dim, d_model, 1.0 / std::sqrt(static_cast<double>(hrv_dim)), rng);
    b_hrv = &bias(s, prefix + ".b_hrv", d_model);
    w_q = &weight(s, prefix + ".w_q", d_model, d_model, a, rng);
    b_q = &bias(s, prefix + ".b_q", d_model);
    w_k = &weight(s, prefix + ".w_k", d_model, d_model, a, rng);
    b_k = &bias(s, prefix + ".b_k", d_model);
    w_v = &weight(s, prefix + ".w_v", d_model, d_model, a, rng);
    b_v = &bias(s, prefix + ".b_v", d_model);
    w_o = &weight(s, prefix + ".w_o", d_model, d_model, a, rng);
    b_o = &bias(s, prefix + ".b_o", d_model);
}

Matrix CrossModalFusion::static_tokens(const Vector& morph, const Vector& hrv, const Options& o) const {
    if (morph.size() != static_cast<Eigen::Index>(n_morph_) * d_model_ || hrv.size() != hrv_dim_) {
        throw DataError(DataErrc::shape_mismatch, "cross_modal_fuse: static input dimension mismatch");
    }
    Matrix s = Matrix::Zero(n_static(), d_model_);
    if (!o.zero_morph) {
        for (int i = 0; i < n_morph_; ++i) s.row(i) = morph.segment(static_cast<Eigen::Index>(i) * d_model_, d_model_);
    }
    if (!o.zero_hrv) s.row(n_morph_) = hrv.transpose() * w_hrv->value + b_hrv->value.row(0);
    return s;
}

Matrix CrossModalFusion::forward(const Matrix& h, const Vector& morph, const Vector& hrv, const Options& o,
                                 Cache* cache) const {
    if (h.cols() != d_model_) throw DataError(DataErrc::shape_mismatch, "cross_modal_fuse: sequence width mismatch");
    if (!o.key_mask.empty() && static_cast<int>(o.key_mask.size()) != n_static()) {
        throw DataError(DataErrc::shape_mismatch, "cross_modal_fuse: key mask length mismatch");
    }
    const Matrix s = static_tokens(morph, hrv, o);
    const Matrix q = add_row(h * w_q->value, b_q);
    const Matrix k = add_row(s * w_k->value, b_k);
    const Matrix v = add_row(s * w_v->value, b_v);
    const int dk = d_model_ / n_heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Matrix att_out(h.rows(), d_model_);
    std::vector<Matrix> attn;
    for (int hd = 0; hd < n_heads_; ++hd) {
        const auto qh = q.middleCols(hd * dk, dk);
        const auto kh = k.middleCols(hd * dk, dk);
        Matrix p = softmax_rows(qh * kh.transpose() * scale, o.key_mask.empty() ? nullptr : &o.key_mask);
        att_out.middleCols(hd * dk, dk) = p * v.middleCols(hd * dk, dk);
        attn.push_back(std::move(p));
    }
    Matrix out = h + add_row(att_out * w_o->value, b_o);
    if (cache) {
        cache->h = h;
        cache->s = s;
        cache->q = q;
        cache->k = k;
        cache->v = v;
        cache->o = std::move(att_out);
        cache->hrv = hrv;
        cache->attn = std::move(attn);
        cache->options = o;
    }
    return out;
}

Matrix CrossModalFusion::backward(const Cache& c, const Matrix& dout) {
    const int dk = d_model_ / n_heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    w_o->grad += c.o.transpose() * dout;
    b_o->grad += dout.colwise().sum();
    const Matrix d_att = dout * w_o->value.transpose();
    Matrix dq(c.q.rows(), d_model_), dk_m(c.k.rows(), d_model_), dv(c.v.rows(), d_model_);
    for (int hd = 0; hd < n_heads_; ++hd) {
        const Matrix& p = c.attn[static_cast<std::size_t>(hd)];
        const auto doh = d_att.middleCols(hd * dk, dk);
        const Matrix dp = doh * c.v.middleCols(hd * dk, dk).transpose();
        dv.middleCols(hd * dk, dk) = p.transpose() * doh;
        const Matrix dlog = softmax_rows_backward(p, dp) * scale;
        dq.middleCols(hd * dk, dk) = dlog * c.k.middleCols(hd * dk, dk);
        dk_m.middleCols(hd * dk, dk) = dlog.transpose() * c.q.middleCols(hd * dk, dk);
    }
    w_q->grad += c.h.transpose() * dq;
    b_q->grad += dq.colwise().sum();
    w_k->grad += c.s.transpose() * dk_m;
    b_k->grad += dk_m.colwise().sum();
    w_v->grad += c.s.transpose() * dv;
    b_v->grad += dv.colwise().sum();
    if (!c.options.zero_hrv) {
        const RowVector ds = dk_m.row(n_morph_) * w_k->value.transpose() + dv.row(n_morph_) * w_v->value.transpose();
        w_hrv->grad += c.hrv * ds;
        b_hrv->grad += ds;
    }
    return dout + dq * w_q->value.transpose();
}

// -------------------------------------------------------------------- head

ClassifierHead::ClassifierHead(ParamStore& s, const std::string& prefix, int d_model, int n_classes,
                               std::mt19937_64& rng) {
    w = &weight(s, prefix + ".w", d_model, n_classes, 1.0 / std::sqrt(static_cast<double>(d_model)), rng);
    b = &bias(s, prefix + ".b", n_classes);
}

Vector ClassifierHead::forward(const Matrix& h, Cache* cache) const {
    const RowVector pooled = h.colwise().mean();
    const RowVector logits = pooled * w->value + b->value.row(0);
    Vector probs = logits.transpose().unaryExpr([](double z) { return sigmoid(z); });
    if (cache) {
        cache->n_tokens = h.rows();
        cache->pooled = pooled;
        cache->probs = probs;
    }
    return probs;
}

Matrix ClassifierHead::backward(const Cache& c, const Vector& dprobs) {
    const RowVector dlogit = (dprobs.array() * c.probs.array() * (1.0 - c.probs.array())).transpose();
    w->grad += c.pooled.transpose() * dlogit;
    b->grad += dlogit;
    const RowVector dpooled = dlogit * w->value.transpose();
    return dpooled.replicate(c.n_tokens, 1) / static_cast<double>(c.n_tokens);
}

// ------------------------------------------------------------------- model

EcgModel::EcgModel(const ModelConfig& config)
    : detail::ModelState(config),
      lead_attention(store_, "lead", config.n_leads, config.lead_dim, config.lead_segments, rng_),
      tokenizer(store_, "tok", config.n_leads, config.kernel_sizes, config.branch_channels, config.token_stride,
                config.d_model, rng_),
      final_norm(nullptr),
      fusion(store_, "fusion", config.d_model, config.n_heads, config.n_morph_tokens, config.hrv_dim, rng_),
      head(store_, "head", config.d_model, config.n_classes, rng_) {
    for (int i = 0; i < config.n_blocks; ++i) {
        blocks.push_back(std::make_unique<BiBlock>(store_, "block" + std::to_string(i), config.d_model,
                                                   config.inner_dim(), config.state_dim, config.share_directions,
                                                   rng_));
    }
    final_norm = &store_.add("final_norm", 1, config.d_model, false);
    final_norm->value.setOnes();
    scan_options_.chunk = config.scan_chunk;
}

CrossModalFusion::Options EcgModel::fusion_options() const {
    CrossModalFusion::Options o;
    o.zero_hrv = variant_ == ModelVariant::no_hrv;
    o.zero_morph = variant_ == ModelVariant::no_morph;
    return o;
}

Vector EcgModel::forward(const Signal& x, const Vector& morph, const Vector& hrv, SliceTrace* trace) const {
    if (x.cols() != config_.slice_length) throw DataError(DataErrc::shape_mismatch, "model: slice length mismatch");
    const auto gated = lead_attention.forward(x, trace ? &trace->lead : nullptr);
    Matrix h = tokenizer.forward(gated.y, trace ? &trace->tok : nullptr);
    if (variant_ != ModelVariant::no_backbone) {
        if (trace) trace->blocks.resize(blocks.size());
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            h = blocks[i]->forward(h, trace ? &trace->blocks[i] : nullptr, scan_options_, config_.norm_eps).out;
        }
        h = rms_norm(h, final_norm->value.row(0), config_.norm_eps, trace ? &trace->final_norm : nullptr);
    }
    const Matrix fused = fusion.forward(h, morph, hrv, fusion_options(), trace ? &trace->fusion : nullptr);
    Vector probs = head.forward(fused, trace ? &trace->head : nullptr);
    if (trace) {
        trace->alpha = gated.alpha;
        trace->probs = probs;
    }
    return probs;
}

Signal EcgModel::backward(SliceTrace& t, const Vector& dprobs) {
    Matrix dh = head.backward(t.head, dprobs);
    dh = fusion.backward(t.fusion, dh);
    if (variant_ != ModelVariant::no_backbone) {
        RowVector dgain = RowVector::Zero(config_.d_model);
        dh = rms_norm_backward(t.final_norm, final_norm->value.row(0), dh, dgain);
        final_norm->grad.row(0) += dgain;
        for (std::size_t i = blocks.size(); i-- > 0;) dh = blocks[i]->backward(t.blocks[i], dh, config_.norm_eps);
    }
    const Signal dgated = tokenizer.backward(t.tok, dh);
    return lead_attention.backward(t.lead, dgated);
}

Signal EcgModel::saliency(const Signal& x, const Vector& morph, const Vector& hrv) {
    std::vector<Matrix> grads;
    for (const auto& p : store_.params()) grads.push_back(p.grad);
    SliceTrace trace;
    forward(x, morph, hrv, &trace);
    Signal g = backward(trace, Vector::Ones(config_.n_classes)).cwiseAbs();
    std::size_t i = 0;
    for (auto& p : store_.params()) p.grad = grads[i++];
    return g;
}

void EcgModel::check_gradients() const {
    for (const auto& p : store_.params()) {
        if (!p.grad.allFinite()) throw NumericError("non-finite gradient in " + p.name);
    }
}

std::vector<Matrix> EcgModel::snapshot() const {
    std::vector<Matrix> out;
    for (const auto& p : store_.params()) out.push_back(p.value);
    return out;
}

void EcgModel::restore(const std::vector<Matrix>& values) {
    if (values.size() != store_.params().size()) throw DataError(DataErrc::shape_mismatch, "restore: wrong count");
    std::size_t i = 0;
    for (auto& p : store_.params()) {
        if (values[i].rows() != p.value.rows() || values[i].cols() != p.value.cols()) {
            throw DataError(DataErrc::shape_mismatch, "restore: shape mismatch for " + p.name);
        }
        p.value = values[i++];
    }
}

}  // namespace rhythmorph
