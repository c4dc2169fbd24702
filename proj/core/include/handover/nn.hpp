#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "handover/rng.hpp"

// Minimal reverse-mode autodiff over dense double matrices, enough for the
// attention encoders, expert decoders and MLPs used by the models.
namespace handover::nn {

using Matrix = Eigen::MatrixXd;

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix adam_m;
    Matrix adam_v;
    bool trainable = true;
};

// Owns every parameter of a model. Indices are stable for the lifetime of
// the store, so layers refer to parameters by index.
class ParameterStore {
public:
    std::size_t add(std::string name, Matrix value);
    Parameter& operator[](std::size_t i) { return params_.at(i); }
    const Parameter& operator[](std::size_t i) const { return params_.at(i); }
    std::size_t size() const noexcept { return params_.size(); }
    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    const Parameter* find(const std::string& name) const;

    void zero_grad();
    std::size_t scalar_count() const;
    // FNV-1a over names and raw value bytes of the selected parameters.
    std::uint64_t hash(const std::string& name_prefix = "") const;
    void set_trainable(const std::string& name_prefix, bool trainable);
    bool all_finite() const;

private:
    std::vector<Parameter> params_;
};

struct Var {
    int id = -1;
};

class Tape {
public:
    Var constant(Matrix value);
    // A leaf whose gradient is kept, e.g. model inputs for sensitivity analysis.
    Var leaf(Matrix value);
    Var param(ParameterStore& store, std::size_t index);

    const Matrix& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
    const Matrix& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Seeds d(root)/d(root) with `seed` (same shape as root, or a 1x1
    // root with a scalar) and propagates; parameter gradients accumulate
    // into their stores.
    void backward(Var root);
    void backward(Var root, const Matrix& seed);
    void clear_grads();
    // When off, backward leaves parameter gradients untouched (input
    // sensitivity passes over a trained model).
    void set_accumulate_parameters(bool on) noexcept { accumulate_params_ = on; }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var add_row(Var a, Var row);   // broadcast a 1xC row over rows
    Var mul_col(Var a, Var col);   // broadcast an Rx1 column over columns
    Var add_tiled_rows(Var a, Var block);  // a has k*block.rows() rows
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var elu(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var exp(Var a);
    Var square(Var a);
    Var softmax_rows(Var a);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
    Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
    Var flatten_rows(Var a);        // 1 x (R*C), row-major
    Var sum(Var a);                 // 1x1
    Var mean(Var a);                // 1x1
    Var row_sum(Var a);             // Rx1
    Var detach(Var a);

    // Per-head attention pooling over groups of `steps` consecutive rows.
    // keys/values: (B*steps) x E, query: 1 x E, E divisible by heads.
    // Output B x E. Softmax weights are kept in `weights` (B*heads x steps).
    Var attention_pool(Var keys, Var values, Var query, int steps, int heads, Matrix* weights = nullptr);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        Parameter* param = nullptr;
        std::function<void(Tape&, const Matrix&)> backward;
    };
    Var push(Matrix value, bool needs_grad, std::function<void(Tape&, const Matrix&)> backward);
    bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
    void accumulate(Var v, const Matrix& g);
    template <class Expr>
    void accumulate_expr(Var v, const Expr& g);

    std::vector<Node> nodes_;
    bool accumulate_params_ = true;
};

// Fully connected layer: y = x W + b, W is in x out.
struct Linear {
    std::size_t weight = 0;
    std::size_t bias = 0;
    Eigen::Index in = 0;
    Eigen::Index out = 0;

    static Linear create(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
                         double gain = 1.0);
    Var operator()(Tape& tape, ParameterStore& store, Var x) const;
};

enum class Activation { None, Elu, Tanh, Sigmoid };

// Stack of Linear layers with the activation between them and `last`
// applied after the final layer.
struct Mlp {
    std::vector<Linear> layers;
    Activation hidden = Activation::Elu;
    Activation last = Activation::None;

    static Mlp create(ParameterStore& store, const std::string& name, const std::vector<Eigen::Index>& sizes,
                      Rng& rng, Activation hidden = Activation::Elu, Activation last = Activation::None,
                      double last_gain = 1.0);
    Var operator()(Tape& tape, ParameterStore& store, Var x) const;
};

Var activate(Tape& tape, Var x, Activation a);

// Sequence encoder to a diagonal Gaussian: per-frame linear + ELU embedding
// with a learned positional term, multi-head attention pooling over the
// frames with a learned query, then an MLP (optionally fed extra per-sample
// columns) to [mu | log_var].
struct AttentionEncoder {
    Linear embed;
    std::size_t position = 0;
    Linear key;
    Linear value;
    std::size_t query = 0;
    Mlp head;
    int steps = 0;
    int heads = 1;
    Eigen::Index extra = 0;
    Eigen::Index latent = 0;

    static AttentionEncoder create(ParameterStore& store, const std::string& name, Eigen::Index frame_width,
                                   int steps, Eigen::Index embed_dim, int heads, Eigen::Index extra,
                                   Eigen::Index hidden, Eigen::Index latent, Rng& rng);
    struct Output {
        Var mu;
        Var log_var;
    };
    // frames: (B*steps) x frame_width, extra: B x extra (ignored when 0).
    Output operator()(Tape& tape, ParameterStore& store, Var frames, Var extra_cols, Matrix* attention = nullptr) const;
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}
    // Updates every trainable parameter from its accumulated gradient.
    void step(ParameterStore& store, double lr);
    long steps() const noexcept { return t_; }

private:
    AdamOptions options_;
    long t_ = 0;
};

// Gaussian helpers shared by the variational models. All inputs are
// B x D rows; results are 1x1 means over the batch of per-row sums.
Var gaussian_sample(Tape& tape, Var mu, Var log_var, const Matrix& eps);
Var kl_standard_normal(Tape& tape, Var mu, Var log_var);
// KL(N(mu_p, var_p) || N(mu_q, var_q)).
Var kl_gaussians(Tape& tape, Var mu_p, Var log_var_p, Var mu_q, Var log_var_q);

Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace handover::nn
