#include "boxdiff/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace boxdiff {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

double draw_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

double draw_uniform(Rng& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

Param& ParamStore::add(const std::string& name, Tensor init) {
    if (has(name)) throw std::invalid_argument("ParamStore::add: duplicate name " + name);
    Param p;
    p.grad = Tensor(init.shape, 0.0);
    p.m = Tensor(init.shape, 0.0);
    p.v = Tensor(init.shape, 0.0);
    p.value = std::move(init);
    return params.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::get(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("ParamStore::get: unknown name " + name);
    return it->second;
}

const Param& ParamStore::get(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("ParamStore::get: unknown name " + name);
    return it->second;
}

bool ParamStore::has(const std::string& name) const { return params.count(name) > 0; }

void ParamStore::zero_grads() {
    for (auto& [name, p] : params) {
        std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
    }
}

Tensor xavier_init(std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
    Tensor t = Tensor::matrix(fan_in, fan_out);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.data) v = (draw_uniform(rng) * 2.0 - 1.0) * bound;
    return t;
}

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::input(Tensor value) {
    Node n;
    n.op = Op::Input;
    n.value = std::move(value);
    return push(std::move(n));
}

int Tape::param(ParamStore& store, const std::string& name) {
    Param& p = store.get(name);
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Node n;
    n.op = Op::ParamRef;
    n.value = p.value;
    n.bound = &p;
    const int id = push(std::move(n));
    param_nodes_[&p] = id;
    return id;
}

int Tape::matmul(int a, int b) {
    const Tensor& A = nodes_[static_cast<std::size_t>(a)].value;
    const Tensor& B = nodes_[static_cast<std::size_t>(b)].value;
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.cols() != B.rows()) {
        throw std::invalid_argument("matmul: incompatible shapes");
    }
    const std::int64_t N = A.rows(), K = A.cols(), M = B.cols();
    Tensor C = Tensor::matrix(N, M);
    for (std::int64_t i = 0; i < N; ++i) {
        for (std::int64_t k = 0; k < K; ++k) {
            const double av = A.at(i, k);
            if (av == 0.0) continue;
            for (std::int64_t j = 0; j < M; ++j) C.at(i, j) += av * B.at(k, j);
        }
    }
    Node n;
    n.op = Op::MatMul;
    n.inputs = {a, b};
    n.value = std::move(C);
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    const Tensor& A = nodes_[static_cast<std::size_t>(a)].value;
    const Tensor& B = nodes_[static_cast<std::size_t>(b)].value;
    if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
    Tensor C = A;
    for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] += B.data[i];
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    n.value = std::move(C);
    return push(std::move(n));
}

int Tape::add_bias(int x, int b) {
    const Tensor& X = nodes_[static_cast<std::size_t>(x)].value;
    const Tensor& B = nodes_[static_cast<std::size_t>(b)].value;
    if (X.shape.size() != 2 || B.numel() != X.cols()) {
        throw std::invalid_argument("add_bias: bias must match column count");
    }
    Tensor C = X;
    for (std::int64_t i = 0; i < X.rows(); ++i) {
        for (std::int64_t j = 0; j < X.cols(); ++j) {
            C.at(i, j) += B.data[static_cast<std::size_t>(j)];
        }
    }
    Node n;
    n.op = Op::AddBias;
    n.inputs = {x, b};
    n.value = std::move(C);
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    const Tensor& A = nodes_[static_cast<std::size_t>(a)].value;
    const Tensor& B = nodes_[static_cast<std::size_t>(b)].value;
    if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
    Tensor C = A;
    for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] *= B.data[i];
    Node n;
    n.op = Op::Mul;
    n.inputs = {a, b};
    n.value = std::move(C);
    return push(std::move(n));
}

int Tape::relu(int x) {
    Tensor C = nodes_[static_cast<std::size_t>(x)].value;
    for (auto& v : C.data) v = v > 0.0 ? v : 0.0;
    Node n;
    n.op = Op::Relu;
    n.inputs = {x};
    n.value = std::move(C);
    return push(std::move(n));
}

namespace {
double gelu_value(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}
double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}
double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

int Tape::gelu(int x) {
    Tensor C = nodes_[static_cast<std::size_t>(x)].value;
    for (auto& v : C.data) v = gelu_value(v);
    Node n;
    n.op = Op::Gelu;
    n.inputs = {x};
    n.value = std::move(C);
    return push(std::move(n));
}

int Tape::sigmoid(int x) {
    Tensor C = nodes_[static_cast<std::size_t>(x)].value;
    for (auto& v : C.data) v = sigmoid_value(v);
    Node n;
    n.op = Op::Sigmoid;
    n.inputs = {x};
    n.value = std::move(C);
    return push(std::move(n));
}

int Tape::layernorm(int x, int gain, int bias) {
    const Tensor& X = nodes_[static_cast<std::size_t>(x)].value;
    const Tensor& G = nodes_[static_cast<std::size_t>(gain)].value;
    const Tensor& B = nodes_[static_cast<std::size_t>(bias)].value;
    if (X.shape.size() != 2 || G.numel() != X.cols() || B.numel() != X.cols()) {
        throw std::invalid_argument("layernorm: gain/bias must match last axis");
    }
    const std::int64_t N = X.rows(), M = X.cols();
    Tensor Y = Tensor::matrix(N, M);
    Tensor xhat = Tensor::matrix(N, M);
    Tensor rstd = Tensor::matrix(N, 1);
    for (std::int64_t i = 0; i < N; ++i) {
        double mean = 0.0;
        for (std::int64_t j = 0; j < M; ++j) mean += X.at(i, j);
        mean /= static_cast<double>(M);
        double var = 0.0;
        for (std::int64_t j = 0; j < M; ++j) {
            const double d = X.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(M);
        const double r = 1.0 / std::sqrt(var + kLayerNormEps);
        rstd.at(i, 0) = r;
        for (std::int64_t j = 0; j < M; ++j) {
            const double h = (X.at(i, j) - mean) * r;
            xhat.at(i, j) = h;
            Y.at(i, j) = h * G.data[static_cast<std::size_t>(j)] +
                         B.data[static_cast<std::size_t>(j)];
        }
    }
    Node n;
    n.op = Op::LayerNorm;
    n.inputs = {x, gain, bias};
    n.value = std::move(Y);
    n.saved_a = std::move(xhat);
    n.saved_b = std::move(rstd);
    return push(std::move(n));
}

int Tape::concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    std::int64_t N = nodes_[static_cast<std::size_t>(parts[0])].value.rows();
    std::int64_t total = 0;
    for (int p : parts) {
        const Tensor& t = nodes_[static_cast<std::size_t>(p)].value;
        if (t.shape.size() != 2 || t.rows() != N) {
            throw std::invalid_argument("concat_cols: row mismatch");
        }
        total += t.cols();
    }
    Tensor C = Tensor::matrix(N, total);
    std::int64_t offset = 0;
    for (int p : parts) {
        const Tensor& t = nodes_[static_cast<std::size_t>(p)].value;
        for (std::int64_t i = 0; i < N; ++i) {
            for (std::int64_t j = 0; j < t.cols(); ++j) C.at(i, offset + j) = t.at(i, j);
        }
        offset += t.cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.inputs = parts;
    n.value = std::move(C);
    return push(std::move(n));
}

int Tape::sum(int x) {
    const Tensor& X = nodes_[static_cast<std::size_t>(x)].value;
    double total = 0.0;
    for (double v : X.data) total += v;
    Node n;
    n.op = Op::Sum;
    n.inputs = {x};
    n.value = Tensor::scalar(total);
    return push(std::move(n));
}

int Tape::clamp_cols(int x, std::vector<double> lo, std::vector<double> hi) {
    const Tensor& X = nodes_[static_cast<std::size_t>(x)].value;
    if (X.shape.size() != 2 || lo.size() != static_cast<std::size_t>(X.cols()) ||
        hi.size() != static_cast<std::size_t>(X.cols())) {
        throw std::invalid_argument("clamp_cols: bounds must match column count");
    }
    Tensor C = X;
    for (std::int64_t i = 0; i < X.rows(); ++i) {
        for (std::int64_t j = 0; j < X.cols(); ++j) {
            const auto sj = static_cast<std::size_t>(j);
            C.at(i, j) = std::clamp(C.at(i, j), lo[sj], hi[sj]);
        }
    }
    Node n;
    n.op = Op::ClampCols;
    n.inputs = {x};
    n.value = std::move(C);
    n.lo = std::move(lo);
    n.hi = std::move(hi);
    return push(std::move(n));
}

int Tape::custom(std::shared_ptr<const CustomOp> op, std::vector<int> inputs, Tensor value) {
    Node n;
    n.op = Op::Custom;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.custom_op = std::move(op);
    return push(std::move(n));
}

const Tensor& Tape::value(int node) const {
    return nodes_[static_cast<std::size_t>(node)].value;
}

const Tensor& Tape::grad(int node) const {
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    return n.grad.data.empty() ? empty_ : n.grad;
}

void Tape::accumulate(int node, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(node)];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape, 0.0);
    for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
}

void Tape::backward(int loss_node) {
    const Tensor& v = nodes_[static_cast<std::size_t>(loss_node)].value;
    if (v.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    backward({{loss_node, Tensor::scalar(1.0)}});
}

void Tape::backward(const std::vector<std::pair<int, Tensor>>& seeds) {
    for (const auto& [node, g] : seeds) {
        if (!g.same_shape(nodes_[static_cast<std::size_t>(node)].value)) {
            throw std::invalid_argument("backward: seed shape mismatch");
        }
        accumulate(node, g);
    }

    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.data.empty()) continue;
        const Tensor& gy = n.grad;

        switch (n.op) {
            case Op::Input:
                break;
            case Op::ParamRef:
                for (std::size_t i = 0; i < gy.data.size(); ++i) {
                    n.bound->grad.data[i] += gy.data[i];
                }
                break;
            case Op::MatMul: {
                const Tensor& A = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& B = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                const std::int64_t N = A.rows(), K = A.cols(), M = B.cols();
                Tensor ga = Tensor::matrix(N, K);
                Tensor gb = Tensor::matrix(K, M);
                for (std::int64_t i = 0; i < N; ++i) {
                    for (std::int64_t j = 0; j < M; ++j) {
                        const double g = gy.at(i, j);
                        if (g == 0.0) continue;
                        for (std::int64_t k = 0; k < K; ++k) {
                            ga.at(i, k) += g * B.at(k, j);
                            gb.at(k, j) += g * A.at(i, k);
                        }
                    }
                }
                accumulate(n.inputs[0], ga);
                accumulate(n.inputs[1], gb);
                break;
            }
            case Op::Add:
                accumulate(n.inputs[0], gy);
                accumulate(n.inputs[1], gy);
                break;
            case Op::AddBias: {
                accumulate(n.inputs[0], gy);
                const Tensor& B = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                Tensor gb(B.shape, 0.0);
                for (std::int64_t i = 0; i < gy.rows(); ++i) {
                    for (std::int64_t j = 0; j < gy.cols(); ++j) {
                        gb.data[static_cast<std::size_t>(j)] += gy.at(i, j);
                    }
                }
                accumulate(n.inputs[1], gb);
                break;
            }
            case Op::Mul: {
                const Tensor& A = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& B = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                Tensor ga = gy, gb = gy;
                for (std::size_t i = 0; i < gy.data.size(); ++i) {
                    ga.data[i] *= B.data[i];
                    gb.data[i] *= A.data[i];
                }
                accumulate(n.inputs[0], ga);
                accumulate(n.inputs[1], gb);
                break;
            }
            case Op::Relu: {
                const Tensor& X = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = gy;
                for (std::size_t i = 0; i < gx.data.size(); ++i) {
                    if (X.data[i] <= 0.0) gx.data[i] = 0.0;
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Gelu: {
                const Tensor& X = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = gy;
                for (std::size_t i = 0; i < gx.data.size(); ++i) {
                    gx.data[i] *= gelu_derivative(X.data[i]);
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Sigmoid: {
                Tensor gx = gy;
                for (std::size_t i = 0; i < gx.data.size(); ++i) {
                    const double y = n.value.data[i];
                    gx.data[i] *= y * (1.0 - y);
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::LayerNorm: {
                const Tensor& G = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                const Tensor& xhat = n.saved_a;
                const Tensor& rstd = n.saved_b;
                const std::int64_t N = gy.rows(), M = gy.cols();
                Tensor gx = Tensor::matrix(N, M);
                Tensor gg(G.shape, 0.0);
                Tensor gb(G.shape, 0.0);
                for (std::int64_t i = 0; i < N; ++i) {
                    double sum_dh = 0.0, sum_dh_xhat = 0.0;
                    for (std::int64_t j = 0; j < M; ++j) {
                        const auto sj = static_cast<std::size_t>(j);
                        const double dh = gy.at(i, j) * G.data[sj];
                        sum_dh += dh;
                        sum_dh_xhat += dh * xhat.at(i, j);
                        gg.data[sj] += gy.at(i, j) * xhat.at(i, j);
                        gb.data[sj] += gy.at(i, j);
                    }
                    const double inv_m = 1.0 / static_cast<double>(M);
                    for (std::int64_t j = 0; j < M; ++j) {
                        const double dh = gy.at(i, j) * G.data[static_cast<std::size_t>(j)];
                        gx.at(i, j) = rstd.at(i, 0) *
                                      (dh - inv_m * sum_dh - xhat.at(i, j) * inv_m * sum_dh_xhat);
                    }
                }
                accumulate(n.inputs[0], gx);
                accumulate(n.inputs[1], gg);
                accumulate(n.inputs[2], gb);
                break;
            }
            case Op::ConcatCols: {
                std::int64_t offset = 0;
                for (int p : n.inputs) {
                    const Tensor& part = nodes_[static_cast<std::size_t>(p)].value;
                    Tensor gp(part.shape, 0.0);
                    for (std::int64_t i = 0; i < part.rows(); ++i) {
                        for (std::int64_t j = 0; j < part.cols(); ++j) {
                            gp.at(i, j) = gy.at(i, offset + j);
                        }
                    }
                    accumulate(p, gp);
                    offset += part.cols();
                }
                break;
            }
            case Op::Sum: {
                const Tensor& X = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx(X.shape, gy.data[0]);
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::ClampCols: {
                const Tensor& X = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = gy;
                for (std::int64_t i = 0; i < X.rows(); ++i) {
                    for (std::int64_t j = 0; j < X.cols(); ++j) {
                        const auto sj = static_cast<std::size_t>(j);
                        const double v = X.at(i, j);
                        if (v < n.lo[sj] || v > n.hi[sj]) gx.at(i, j) = 0.0;
                    }
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Custom: {
                std::vector<const Tensor*> in_values;
                std::vector<Tensor*> in_grads;
                std::vector<Tensor> scratch(n.inputs.size());
                for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                    Node& in = nodes_[static_cast<std::size_t>(n.inputs[i])];
                    in_values.push_back(&in.value);
                    scratch[i] = Tensor(in.value.shape, 0.0);
                    in_grads.push_back(&scratch[i]);
                }
                n.custom_op->backward(gy, in_values, in_grads);
                for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                    accumulate(n.inputs[i], scratch[i]);
                }
                break;
            }
        }
    }
}

Tensor timestep_embedding(int t, int dim, int T) {
    if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("timestep_embedding: dim must be even");
    if (t < 0 || t > T) throw std::out_of_range("timestep_embedding: t out of [0, T]");
    const int half = dim / 2;
    Tensor e({dim});
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        e.data[static_cast<std::size_t>(i)] = std::sin(t * freq);
        e.data[static_cast<std::size_t>(half + i)] = std::cos(t * freq);
    }
    return e;
}

void adamw_step(ParamStore& store, const AdamWConfig& config) {
    store.step += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(store.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(store.step));
    for (auto& [name, p] : store.params) {
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            const double g = p.grad.data[i];
            p.m.data[i] = config.beta1 * p.m.data[i] + (1.0 - config.beta1) * g;
            p.v.data[i] = config.beta2 * p.v.data[i] + (1.0 - config.beta2) * g * g;
            const double mhat = p.m.data[i] / bc1;
            const double vhat = p.v.data[i] / bc2;
            p.value.data[i] -= config.lr * (mhat / (std::sqrt(vhat) + config.eps) +
                                            config.weight_decay * p.value.data[i]);
            p.grad.data[i] = 0.0;
        }
    }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, p] : store.params) {
        for (double g : p.grad.data) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto& [name, p] : store.params) {
            for (double& g : p.grad.data) g *= scale;
        }
    }
    return norm;
}

}  // namespace boxdiff
