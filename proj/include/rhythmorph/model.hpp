#pragma once

#include "rhythmorph/nn.hpp"
#include "rhythmorph/preprocess.hpp"
#include "rhythmorph/ssm.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <memory>
#include <random>
#include <cstdint>
#include <string>
#include <vector>

namespace rhythmorph {

struct ModelConfig {
    int n_classes = 2;
    int n_leads = kNumLeads;
    Eigen::Index slice_length = 2500;
    int d_model = 96;
    int n_blocks = 4;
    int state_dim = 16;
    int expand = 2;  // inner channels = expand * d_model
    int token_stride = 5;
    int branch_channels = 32;
    std::array<int, 3> kernel_sizes{3, 7, 15};
    int n_heads = 8;
    int n_morph_tokens = 8;
    int hrv_dim = 36;
    int lead_dim = 16;
    int lead_segments = 8;
    bool share_directions = false;
    int scan_chunk = 64;
    double norm_eps = 1e-6;
    std::uint64_t seed = 0;

    static ModelConfig desk();
    static ModelConfig full_scale();

    int inner_dim() const { return expand * d_model; }
    int morph_dim() const { return n_morph_tokens * d_model; }
    Eigen::Index n_tokens() const { return slice_length / token_stride; }
    void validate() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    bool operator==(const ModelConfig&) const = default;
};

enum class ModelVariant { full, no_hrv, no_backbone, no_morph };

ModelVariant parse_variant(const std::string& name);
std::string variant_name(ModelVariant v);

// Per-lead scalar gate from single-head self-attention over lead summaries
// (segment means of x and x^2) plus a learnable lead-identity embedding.
class LeadAttention {
public:
    LeadAttention(ParamStore& store, const std::string& prefix, int n_leads, int dim, int segments,
                  std::mt19937_64& rng);

    struct Cache {
        Signal x;
        Matrix summary, e, q, k, v, attn, r;
        Vector alpha;
    };
    struct Output {
        Signal y;
        Vector alpha;
    };

    Output forward(const Signal& x, Cache* cache) const;
    Signal backward(const Cache& cache, const Signal& dy);

    Param *w_sum, *b_sum, *lead_embed, *w_q, *w_k, *w_v, *w_gate, *b_gate, *gate_bias;

private:
    int n_leads_, dim_, segments_;
};

// Parallel conv branches sampled every `stride` samples, SiLU, then a linear
// projection to d_model. Token t is centred on sample t*stride + stride/2.
class Tokenizer {
public:
    Tokenizer(ParamStore& store, const std::string& prefix, int n_leads, std::array<int, 3> kernels,
              int branch_channels, int stride, int d_model, std::mt19937_64& rng);

    struct Cache {
        std::array<Matrix, 3> cols;
        Matrix pre, act;
        Eigen::Index length = 0;
    };

    Matrix forward(const Signal& x, Cache* cache) const;
    Signal backward(const Cache& cache, const Matrix& dtokens);

    std::array<Param*, 3> w_branch, b_branch;
    Param *w_proj, *b_proj;

private:
    Matrix im2col(const Signal& x, int branch) const;
    int n_leads_;
    std::array<int, 3> kernels_;
    int channels_, stride_, d_model_;
};

// One direction of the selective state-space mixer.
class SelectiveDirection {
public:
    SelectiveDirection(ParamStore& store, const std::string& prefix, int d_model, int inner, int state_dim,
                   std::mt19937_64& rng);

    struct Cache {
        Matrix x_in, xr, z, u, dt_pre, y_scan, y, gz;
        ScanParams scan;
        std::vector<double> states;
    };

    Matrix forward(const Matrix& x, Cache* cache, const ScanOptions& options) const;
    Matrix backward(const Cache& cache, const Matrix& dout);

    Param *w_in, *w_dt, *b_dt, *w_b, *w_c, *a_log, *d_skip, *w_out;

private:
    int inner_;
};

// Pre-norm bidirectional block: out = H + g*F(Hn) + (1-g)*flip(B(flip(Hn))).
class BiBlock {
public:
    BiBlock(ParamStore& store, const std::string& prefix, int d_model, int inner, int state_dim, bool share,
            std::mt19937_64& rng);

    struct Cache {
        RmsNormCache norm;
        SelectiveDirection::Cache fwd, bwd;
        Matrix hf, hb, cat, gate;
    };
    struct Output {
        Matrix out;      // residual output
        Matrix mix;      // gated combination of the two directions
        Matrix h_fwd, h_bwd;
    };

    Output forward(const Matrix& h, Cache* cache, const ScanOptions& options, double eps) const;
    Matrix backward(const Cache& cache, const Matrix& dout, double eps);

    Param *norm_gain, *w_gate, *b_gate;
    SelectiveDirection& forward_dir() { return *fwd_; }
    SelectiveDirection& backward_dir() { return share_ ? *fwd_ : *bwd_; }

private:
    std::unique_ptr<SelectiveDirection> fwd_, bwd_;
    bool share_;
};

// Multi-head cross-attention from the sequence (queries) to static tokens:
// n_morph reshaped morphology tokens followed by one projected rhythm token.
class CrossModalFusion {
public:
    CrossModalFusion(ParamStore& store, const std::string& prefix, int d_model, int n_heads, int n_morph,
                     int hrv_dim, std::mt19937_64& rng);

    struct Options {
        bool zero_morph = false;
        bool zero_hrv = false;
        std::vector<bool> key_mask;  // empty = all keys visible
    };
    struct Cache {
        Matrix h, s, q, k, v, o;
        Vector hrv;
        std::vector<Matrix> attn;  // per head [T x n_static]
        Options options;
    };

    Matrix static_tokens(const Vector& morph, const Vector& hrv, const Options& options) const;
    Matrix forward(const Matrix& h, const Vector& morph, const Vector& hrv, const Options& options,
                   Cache* cache) const;
    Matrix backward(const Cache& cache, const Matrix& dout);

    int n_static() const { return n_morph_ + 1; }
    Param *w_hrv, *b_hrv, *w_q, *b_q, *w_k, *b_k, *w_v, *b_v, *w_o, *b_o;

private:
    int d_model_, n_heads_, n_morph_, hrv_dim_;
};

class ClassifierHead {
public:
    ClassifierHead(ParamStore& store, const std::string& prefix, int d_model, int n_classes, std::mt19937_64& rng);

    struct Cache {
        Eigen::Index n_tokens = 0;
        RowVector pooled;
        Vector probs;
    };

    Vector forward(const Matrix& h, Cache* cache) const;
    Matrix backward(const Cache& cache, const Vector& dprobs);

    Param *w, *b;
};

struct SliceTrace {
    LeadAttention::Cache lead;
    Tokenizer::Cache tok;
    std::vector<BiBlock::Cache> blocks;
    RmsNormCache final_norm;
    CrossModalFusion::Cache fusion;
    ClassifierHead::Cache head;
    Vector alpha;
    Vector probs;
};

namespace detail {
// Base so that config, parameter store and init RNG exist before the layers.
struct ModelState {
    explicit ModelState(const ModelConfig& c) : config_(c), rng_(c.seed) { c.validate(); }
    ModelConfig config_;
    ParamStore store_;
    std::mt19937_64 rng_;
};
}  // namespace detail

class EcgModel : private detail::ModelState {
public:
    explicit EcgModel(const ModelConfig& config);
    EcgModel(const EcgModel&) = delete;
    EcgModel& operator=(const EcgModel&) = delete;

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    void set_variant(ModelVariant v) { variant_ = v; }
    ModelVariant variant() const { return variant_; }
    ScanOptions& scan_options() { return scan_options_; }

    // Per-class probabilities for one slice.
    Vector forward(const Signal& x, const Vector& morph, const Vector& hrv, SliceTrace* trace = nullptr) const;
    // Accumulates parameter gradients for dL/dprobs and returns dL/dx.
    Signal backward(SliceTrace& trace, const Vector& dprobs);
    // |d(sum of class probabilities)/dx|; parameter gradients are left untouched.
    Signal saliency(const Signal& x, const Vector& morph, const Vector& hrv);

    // Throws NumericError naming the first parameter with a non-finite gradient.
    void check_gradients() const;

    std::vector<Matrix> snapshot() const;
    void restore(const std::vector<Matrix>& values);

    LeadAttention lead_attention;
    Tokenizer tokenizer;
    std::vector<std::unique_ptr<BiBlock>> blocks;
    Param* final_norm;
    CrossModalFusion fusion;
    ClassifierHead head;

private:
    CrossModalFusion::Options fusion_options() const;
    ModelVariant variant_ = ModelVariant::full;
    ScanOptions scan_options_;
};

}  // namespace rhythmorph
