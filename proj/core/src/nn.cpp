#include "handover/nn.hpp"

#include <cmath>
#include <cstring>

#include "handover/error.hpp"

namespace handover::nn {

// ---------------------------------------------------------------- store

std::size_t ParameterStore::add(std::string name, Matrix value) {
    for (const auto& p : params_)
        if (p.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
    Parameter p;
    p.name = std::move(name);
    p.grad = Matrix::Zero(value.rows(), value.cols());
    p.adam_m = Matrix::Zero(value.rows(), value.cols());
    p.adam_v = Matrix::Zero(value.rows(), value.cols());
    p.value = std::move(value);
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

const Parameter* ParameterStore::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.grad.setZero();
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

std::uint64_t ParameterStore::hash(const std::string& name_prefix) const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : params_) {
        if (p.name.rfind(name_prefix, 0) != 0) continue;
        mix(p.name.data(), p.name.size());
        mix(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(double));
    }
    return h;
}

void ParameterStore::set_trainable(const std::string& name_prefix, bool trainable) {
    for (auto& p : params_)
        if (p.name.rfind(name_prefix, 0) == 0) p.trainable = trainable;
}

bool ParameterStore::all_finite() const {
    for (const auto& p : params_)
        if (!p.value.allFinite()) return false;
    return true;
}

// ---------------------------------------------------------------- tape

Var Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, const Matrix&)> backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::param(ParameterStore& store, std::size_t index) {
    Parameter& p = store[index];
    Var v = push(p.value, p.trainable, nullptr);
    nodes_.back().param = &p;
    return v;
}

void Tape::accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
        n.grad = g;
    else
        n.grad += g;
}

template <class Expr>
void Tape::accumulate_expr(Var v, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
        n.grad = g;
    else
        n.grad += g;
}

void Tape::clear_grads() {
    for (auto& n : nodes_) n.grad.resize(0, 0);
}

void Tape::backward(Var root) {
    const Matrix& v = value(root);
    backward(root, Matrix::Ones(v.rows(), v.cols()));
}

void Tape::backward(Var root, const Matrix& seed) {
    const Matrix& v = value(root);
    if (seed.rows() != v.rows() || seed.cols() != v.cols()) throw ValidationError("backward: seed shape mismatch");
    accumulate(root, seed);
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.param) {
            if (accumulate_params_) n.param->grad += n.grad;
        } else if (n.backward) {
            const Matrix g = n.grad;
            n.backward(*this, g);
        }
    }
}

namespace {
void check_same(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ValidationError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()));
}
}  // namespace

Var Tape::matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.rows()) throw ValidationError("matmul: inner dimensions differ");
    Matrix out = A * B;
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Matrix& g) {
        if (t.needs(a)) t.accumulate_expr(a, g * t.value(b).transpose());
        if (t.needs(b)) t.accumulate_expr(b, t.value(a).transpose() * g);
    });
}

Var Tape::add(Var a, Var b) {
    check_same(value(a), value(b), "add");
    return push(value(a) + value(b), needs(a) || needs(b), [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var Tape::sub(Var a, Var b) {
    check_same(value(a), value(b), "sub");
    return push(value(a) - value(b), needs(a) || needs(b), [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate_expr(b, -g);
    });
}

Var Tape::mul(Var a, Var b) {
    check_same(value(a), value(b), "mul");
    return push(value(a).cwiseProduct(value(b)), needs(a) || needs(b), [a, b](Tape& t, const Matrix& g) {
        if (t.needs(a)) t.accumulate_expr(a, g.cwiseProduct(t.value(b)));
        if (t.needs(b)) t.accumulate_expr(b, g.cwiseProduct(t.value(a)));
    });
}

Var Tape::add_row(Var a, Var row) {
    const Matrix& A = value(a);
    const Matrix& r = value(row);
    if (r.rows() != 1 || r.cols() != A.cols()) throw ValidationError("add_row: row shape mismatch");
    Matrix out = A.rowwise() + r.row(0);
    return push(std::move(out), needs(a) || needs(row), [a, row](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        if (t.needs(row)) t.accumulate_expr(row, g.colwise().sum());
    });
}

Var Tape::mul_col(Var a, Var col) {
    const Matrix& A = value(a);
    const Matrix& c = value(col);
    if (c.cols() != 1 || c.rows() != A.rows()) throw ValidationError("mul_col: column shape mismatch");
    Matrix out = A.array().colwise() * c.col(0).array();
    return push(std::move(out), needs(a) || needs(col), [a, col](Tape& t, const Matrix& g) {
        if (t.needs(a)) t.accumulate_expr(a, (g.array().colwise() * t.value(col).col(0).array()).matrix());
        if (t.needs(col)) t.accumulate_expr(col, g.cwiseProduct(t.value(a)).rowwise().sum());
    });
}

Var Tape::add_tiled_rows(Var a, Var block) {
    const Matrix& A = value(a);
    const Matrix& P = value(block);
    if (P.cols() != A.cols() || P.rows() == 0 || A.rows() % P.rows() != 0)
        throw ValidationError("add_tiled_rows: shape mismatch");
    const Eigen::Index k = A.rows() / P.rows();
    Matrix out = A;
    for (Eigen::Index i = 0; i < k; ++i) out.middleRows(i * P.rows(), P.rows()) += P;
    return push(std::move(out), needs(a) || needs(block), [a, block, k](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        if (t.needs(block)) {
            const Eigen::Index L = t.value(block).rows();
            Matrix gb = Matrix::Zero(L, g.cols());
            for (Eigen::Index i = 0; i < k; ++i) gb += g.middleRows(i * L, L);
            t.accumulate(block, gb);
        }
    });
}

Var Tape::scale(Var a, double s) {
    return push(value(a) * s, needs(a), [a, s](Tape& t, const Matrix& g) { t.accumulate_expr(a, g * s); });
}

Var Tape::add_scalar(Var a, double s) {
    return push((value(a).array() + s).matrix(), needs(a), [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var Tape::elu(Var a) {
    Matrix out = value(a).unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), needs(a), [a, self](Tape& t, const Matrix& g) {
        const Matrix& x = t.value(a);
        const Matrix& y = t.nodes_[static_cast<std::size_t>(self)].value;
        Matrix d = g;
        for (Eigen::Index i = 0; i < d.size(); ++i)
            if (x.data()[i] <= 0.0) d.data()[i] *= y.data()[i] + 1.0;
        t.accumulate(a, d);
    });
}

Var Tape::tanh(Var a) {
    Matrix out = value(a).array().tanh().matrix();
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), needs(a), [a, self](Tape& t, const Matrix& g) {
        const Matrix& y = t.nodes_[static_cast<std::size_t>(self)].value;
        t.accumulate_expr(a, (g.array() * (1.0 - y.array().square())).matrix());
    });
}

Var Tape::sigmoid(Var a) {
    Matrix out = value(a).unaryExpr([](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), needs(a), [a, self](Tape& t, const Matrix& g) {
        const Matrix& y = t.nodes_[static_cast<std::size_t>(self)].value;
        t.accumulate_expr(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
    });
}

Var Tape::exp(Var a) {
    Matrix out = value(a).array().exp().matrix();
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), needs(a), [a, self](Tape& t, const Matrix& g) {
        t.accumulate_expr(a, g.cwiseProduct(t.nodes_[static_cast<std::size_t>(self)].value));
    });
}

Var Tape::square(Var a) {
    return push(value(a).array().square().matrix(), needs(a), [a](Tape& t, const Matrix& g) {
        t.accumulate_expr(a, (2.0 * g.array() * t.value(a).array()).matrix());
    });
}

Var Tape::softmax_rows(Var a) {
    const Matrix& A = value(a);
    Matrix out(A.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
        const double m = A.row(r).maxCoeff();
        out.row(r) = (A.row(r).array() - m).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), needs(a), [a, self](Tape& t, const Matrix& g) {
        const Matrix& y = t.nodes_[static_cast<std::size_t>(self)].value;
        const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
        t.accumulate_expr(a, (y.array() * (g.colwise() - dot).array()).matrix());
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ValidationError("concat_cols: no inputs");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    bool any = false;
    for (Var p : parts) {
        if (value(p).rows() != rows) throw ValidationError("concat_cols: row count mismatch");
        cols += value(p).cols();
        any = any || needs(p);
    }
    Matrix out(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
        out.middleCols(c, value(p).cols()) = value(p);
        c += value(p).cols();
    }
    return push(std::move(out), any, [parts](Tape& t, const Matrix& g) {
        Eigen::Index c0 = 0;
        for (Var p : parts) {
            const Eigen::Index w = t.value(p).cols();
            if (t.needs(p)) t.accumulate_expr(p, g.middleCols(c0, w));
            c0 += w;
        }
    });
}

Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    const Matrix& A = value(a);
    if (start < 0 || count < 0 || start + count > A.cols()) throw ValidationError("slice_cols: out of range");
    return push(A.middleCols(start, count), needs(a), [a, start, count](Tape& t, const Matrix& g) {
        Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
        full.middleCols(start, count) = g;
        t.accumulate(a, full);
    });
}

Var Tape::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    const Matrix& A = value(a);
    if (start < 0 || count < 0 || start + count > A.rows()) throw ValidationError("slice_rows: out of range");
    return push(A.middleRows(start, count), needs(a), [a, start, count](Tape& t, const Matrix& g) {
        Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
        full.middleRows(start, count) = g;
        t.accumulate(a, full);
    });
}

Var Tape::flatten_rows(Var a) {
    const Matrix& A = value(a);
    Matrix out(1, A.size());
    for (Eigen::Index r = 0; r < A.rows(); ++r) out.block(0, r * A.cols(), 1, A.cols()) = A.row(r);
    return push(std::move(out), needs(a), [a](Tape& t, const Matrix& g) {
        const Eigen::Index R = t.value(a).rows(), C = t.value(a).cols();
        Matrix d(R, C);
        for (Eigen::Index r = 0; r < R; ++r) d.row(r) = g.block(0, r * C, 1, C);
        t.accumulate(a, d);
    });
}

Var Tape::sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), needs(a), [a](Tape& t, const Matrix& g) {
        t.accumulate_expr(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
    });
}

Var Tape::mean(Var a) {
    const auto n = static_cast<double>(value(a).size());
    if (n == 0) throw ValidationError("mean: empty input");
    return scale(sum(a), 1.0 / n);
}

Var Tape::row_sum(Var a) {
    return push(value(a).rowwise().sum(), needs(a), [a](Tape& t, const Matrix& g) {
        t.accumulate_expr(a, g.col(0).replicate(1, t.value(a).cols()));
    });
}

Var Tape::detach(Var a) { return constant(value(a)); }

Var Tape::attention_pool(Var keys, Var values, Var query, int steps, int heads, Matrix* weights) {
    const Matrix& K = value(keys);
    const Matrix& V = value(values);
    const Matrix& Q = value(query);
    const Eigen::Index E = K.cols();
    if (steps <= 0 || heads <= 0 || E % heads != 0) throw ValidationError("attention_pool: bad head layout");
    if (V.rows() != K.rows() || V.cols() != E || Q.rows() != 1 || Q.cols() != E || K.rows() % steps != 0)
        throw ValidationError("attention_pool: shape mismatch");
    const Eigen::Index B = K.rows() / steps;
    const Eigen::Index dh = E / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix att(B * heads, steps);
    Matrix out = Matrix::Zero(B, E);
    for (Eigen::Index b = 0; b < B; ++b) {
        for (Eigen::Index h = 0; h < heads; ++h) {
            auto row = att.row(b * heads + h);
            for (Eigen::Index l = 0; l < steps; ++l)
                row(l) = K.row(b * steps + l).segment(h * dh, dh).dot(Q.row(0).segment(h * dh, dh)) * inv;
            const double m = row.maxCoeff();
            row = (row.array() - m).exp().matrix();
            row /= row.sum();
            for (Eigen::Index l = 0; l < steps; ++l)
                out.row(b).segment(h * dh, dh) += row(l) * V.row(b * steps + l).segment(h * dh, dh);
        }
    }
    if (weights) *weights = att;
    const bool ng = needs(keys) || needs(values) || needs(query);
    return push(std::move(out), ng, [keys, values, query, steps, heads, att](Tape& t, const Matrix& g) {
        const Matrix& K = t.value(keys);
        const Matrix& V = t.value(values);
        const Matrix& Q = t.value(query);
        const Eigen::Index E = K.cols();
        const Eigen::Index B = K.rows() / steps;
        const Eigen::Index dh = E / heads;
        const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
        Matrix dK = Matrix::Zero(K.rows(), E);
        Matrix dV = Matrix::Zero(V.rows(), E);
        Matrix dQ = Matrix::Zero(1, E);
        Eigen::VectorXd da(steps);
        for (Eigen::Index b = 0; b < B; ++b) {
            for (Eigen::Index h = 0; h < heads; ++h) {
                const auto a = att.row(b * heads + h);
                const auto go = g.row(b).segment(h * dh, dh);
                for (Eigen::Index l = 0; l < steps; ++l) {
                    dV.row(b * steps + l).segment(h * dh, dh) += a(l) * go;
                    da(l) = go.dot(V.row(b * steps + l).segment(h * dh, dh));
                }
                const double mean_da = a.dot(da.transpose());
                for (Eigen::Index l = 0; l < steps; ++l) {
                    const double ds = a(l) * (da(l) - mean_da) * inv;
                    dK.row(b * steps + l).segment(h * dh, dh) += ds * Q.row(0).segment(h * dh, dh);
                    dQ.row(0).segment(h * dh, dh) += ds * K.row(b * steps + l).segment(h * dh, dh);
                }
            }
        }
        if (t.needs(keys)) t.accumulate(keys, dK);
        if (t.needs(values)) t.accumulate(values, dV);
        if (t.needs(query)) t.accumulate(query, dQ);
    });
}

// ---------------------------------------------------------------- layers

Linear Linear::create(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
                      double gain) {
    Linear l;
    l.in = in;
    l.out = out;
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -bound, bound);
    l.weight = store.add(name + ".weight", std::move(w));
    l.bias = store.add(name + ".bias", Matrix::Zero(1, out));
    return l;
}

Var Linear::operator()(Tape& tape, ParameterStore& store, Var x) const {
    if (tape.value(x).cols() != in)
        throw ValidationError("linear: expected " + std::to_string(in) + " input columns, got " +
                              std::to_string(tape.value(x).cols()));
    return tape.add_row(tape.matmul(x, tape.param(store, weight)), tape.param(store, bias));
}

Var activate(Tape& tape, Var x, Activation a) {
    switch (a) {
        case Activation::None:
            return x;
        case Activation::Elu:
            return tape.elu(x);
        case Activation::Tanh:
            return tape.tanh(x);
        case Activation::Sigmoid:
            return tape.sigmoid(x);
    }
    return x;
}

Mlp Mlp::create(ParameterStore& store, const std::string& name, const std::vector<Eigen::Index>& sizes, Rng& rng,
                Activation hidden, Activation last, double last_gain) {
    if (sizes.size() < 2) throw ConfigError("mlp '" + name + "' needs at least input and output sizes");
    Mlp m;
    m.hidden = hidden;
    m.last = last;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        const bool final_layer = i + 2 == sizes.size();
        m.layers.push_back(Linear::create(store, name + "." + std::to_string(i), sizes[i], sizes[i + 1], rng,
                                          final_layer ? last_gain : 1.0));
    }
    return m;
}

Var Mlp::operator()(Tape& tape, ParameterStore& store, Var x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i](tape, store, x);
        x = activate(tape, x, i + 1 == layers.size() ? last : hidden);
    }
    return x;
}

AttentionEncoder AttentionEncoder::create(ParameterStore& store, const std::string& name, Eigen::Index frame_width,
                                          int steps, Eigen::Index embed_dim, int heads, Eigen::Index extra,
                                          Eigen::Index hidden, Eigen::Index latent, Rng& rng) {
    if (steps <= 0 || heads <= 0 || embed_dim % heads != 0)
        throw ConfigError("encoder '" + name + "': embed_dim must be a multiple of the head count");
    AttentionEncoder e;
    e.steps = steps;
    e.heads = heads;
    e.extra = extra;
    e.latent = latent;
    e.embed = Linear::create(store, name + ".embed", frame_width, embed_dim, rng);
    Matrix pos(steps, embed_dim);
    for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = 0.02 * standard_normal(rng);
    e.position = store.add(name + ".position", std::move(pos));
    e.key = Linear::create(store, name + ".key", embed_dim, embed_dim, rng);
    e.value = Linear::create(store, name + ".value", embed_dim, embed_dim, rng);
    e.query = store.add(name + ".query", Matrix::Zero(1, embed_dim));
    e.head = Mlp::create(store, name + ".head", {embed_dim + extra, hidden, 2 * latent}, rng, Activation::Elu,
                         Activation::None, 0.1);
    return e;
}

AttentionEncoder::Output AttentionEncoder::operator()(Tape& tape, ParameterStore& store, Var frames, Var extra_cols,
                                                      Matrix* attention) const {
    const Var emb = tape.add_tiled_rows(tape.elu(embed(tape, store, frames)), tape.param(store, position));
    const Var pooled = tape.attention_pool(key(tape, store, emb), value(tape, store, emb), tape.param(store, query),
                                           steps, heads, attention);
    const Var in = extra > 0 ? tape.concat_cols({pooled, extra_cols}) : pooled;
    const Var out = head(tape, store, in);
    return {tape.slice_cols(out, 0, latent), tape.slice_cols(out, latent, latent)};
}

// ---------------------------------------------------------------- optimizer

void Adam::step(ParameterStore& store, double lr) {
    ++t_;
    double scale = 1.0;
    if (options_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : store.all())
            if (p.trainable) sq += p.grad.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > options_.clip_norm) scale = options_.clip_norm / norm;
    }
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (auto& p : store.all()) {
        if (!p.trainable) continue;
        const Matrix g = p.grad * scale;
        p.adam_m = options_.beta1 * p.adam_m + (1.0 - options_.beta1) * g;
        p.adam_v = options_.beta2 * p.adam_v + (1.0 - options_.beta2) * g.cwiseProduct(g);
        p.value.array() -= lr * (p.adam_m.array() / c1) / ((p.adam_v.array() / c2).sqrt() + options_.epsilon);
    }
}

// ---------------------------------------------------------------- gaussians

Var gaussian_sample(Tape& tape, Var mu, Var log_var, const Matrix& eps) {
    const Var sigma = tape.exp(tape.scale(log_var, 0.5));
    return tape.add(mu, tape.mul(sigma, tape.constant(eps)));
}

Var kl_standard_normal(Tape& tape, Var mu, Var log_var) {
    // 0.5 * sum(mu^2 + exp(lv) - 1 - lv), averaged over rows.
    const auto rows = static_cast<double>(tape.value(mu).rows());
    const Var terms = tape.sub(tape.add(tape.square(mu), tape.exp(log_var)), tape.add_scalar(log_var, 1.0));
    return tape.scale(tape.sum(terms), 0.5 / rows);
}

Var kl_gaussians(Tape& tape, Var mu_p, Var log_var_p, Var mu_q, Var log_var_q) {
    // 0.5 * sum(lv_q - lv_p + (exp(lv_p) + (mu_p - mu_q)^2) / exp(lv_q) - 1)
    const auto rows = static_cast<double>(tape.value(mu_p).rows());
    const Var inv_var_q = tape.exp(tape.scale(log_var_q, -1.0));
    const Var num = tape.add(tape.exp(log_var_p), tape.square(tape.sub(mu_p, mu_q)));
    const Var terms = tape.add_scalar(tape.add(tape.sub(log_var_q, log_var_p), tape.mul(num, inv_var_q)), -1.0);
    return tape.scale(tape.sum(terms), 0.5 / rows);
}

Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
    return m;
}

}  // namespace handover::nn
