#include "takevla/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace takevla::ad {

Tensor Tensor::make(std::string name, std::vector<int> shape) {
    Tensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    t.value.assign(n, 0.0);
    t.grad.assign(n, 0.0);
    return t;
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

bool Tensor::all_finite() const {
    return std::all_of(value.begin(), value.end(), [](double x) { return std::isfinite(x); });
}

Tape::NodeId Tape::push(std::vector<double> value, std::function<void(Tape&, Node&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.grad.assign(n.value.size(), 0.0);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::param(Tensor& t) {
    const NodeId id = push(t.value, nullptr);
    nodes_[id].param = &t;
    return id;
}

Tape::NodeId Tape::constant(std::vector<double> v) { return push(std::move(v), nullptr); }

Tape::NodeId Tape::constant_scalar(double v) { return push({v}, nullptr); }

double Tape::scalar(NodeId id) const {
    if (nodes_[id].value.size() != 1) throw std::logic_error("scalar() on non-scalar node");
    return nodes_[id].value[0];
}

Tape::NodeId Tape::affine(NodeId weight, NodeId bias, NodeId x, int rows, int cols) {
    const auto& w = nodes_[weight].value;
    const auto& b = nodes_[bias].value;
    const auto& in = nodes_[x].value;
    if (static_cast<int>(in.size()) != cols || static_cast<int>(w.size()) != rows * cols ||
        static_cast<int>(b.size()) != rows) {
        throw std::invalid_argument("affine: shape mismatch");
    }
    std::vector<double> out(rows);
    for (int i = 0; i < rows; ++i) {
        double acc = b[i];
        const double* wr = w.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) acc += wr[j] * in[j];
        out[i] = acc;
    }
    return push(std::move(out), [weight, bias, x, rows, cols](Tape& t, Node& n) {
        const auto& w = t.nodes_[weight].value;
        const auto& in = t.nodes_[x].value;
        auto& gw = t.grad(weight);
        auto& gb = t.grad(bias);
        auto& gx = t.grad(x);
        for (int i = 0; i < rows; ++i) {
            const double gi = n.grad[i];
            gb[i] += gi;
            double* gwr = gw.data() + static_cast<std::size_t>(i) * cols;
            const double* wr = w.data() + static_cast<std::size_t>(i) * cols;
            for (int j = 0; j < cols; ++j) {
                gwr[j] += gi * in[j];
                gx[j] += gi * wr[j];
            }
        }
    });
}

Tape::NodeId Tape::tanh(NodeId x) {
    std::vector<double> out = nodes_[x].value;
    for (auto& v : out) v = std::tanh(v);
    return push(std::move(out), [x](Tape& t, Node& n) {
        auto& gx = t.grad(x);
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            gx[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
        }
    });
}

Tape::NodeId Tape::concat(NodeId a, NodeId b) {
    std::vector<double> out = nodes_[a].value;
    out.insert(out.end(), nodes_[b].value.begin(), nodes_[b].value.end());
    const std::size_t na = nodes_[a].value.size();
    return push(std::move(out), [a, b, na](Tape& t, Node& n) {
        auto& ga = t.grad(a);
        auto& gb = t.grad(b);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[na + i];
    });
}

Tape::NodeId Tape::log_softmax(NodeId logits, double temperature) {
    if (temperature <= 0.0) throw std::invalid_argument("log_softmax: temperature must be > 0");
    std::vector<double> z = nodes_[logits].value;
    for (auto& v : z) v /= temperature;
    const double zmax = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - zmax);
    lse = zmax + std::log(lse);
    for (auto& v : z) v -= lse;
    return push(std::move(z), [logits, temperature](Tape& t, Node& n) {
        auto& gx = t.grad(logits);
        double gsum = 0.0;
        for (double g : n.grad) gsum += g;
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            gx[i] += (n.grad[i] - std::exp(n.value[i]) * gsum) / temperature;
        }
    });
}

Tape::NodeId Tape::pick(NodeId x, int index) {
    return push({nodes_[x].value.at(index)}, [x, index](Tape& t, Node& n) {
        t.grad(x)[index] += n.grad[0];
    });
}

Tape::NodeId Tape::embed_row(NodeId table, int index, int rows, int cols) {
    const auto& tab = nodes_[table].value;
    if (static_cast<int>(tab.size()) != rows * cols) throw std::invalid_argument("embed_row: shape");
    if (index < 0 || index >= rows) throw std::out_of_range("embed_row: index");
    std::vector<double> out(tab.begin() + static_cast<std::size_t>(index) * cols,
                            tab.begin() + static_cast<std::size_t>(index + 1) * cols);
    return push(std::move(out), [table, index, cols](Tape& t, Node& n) {
        auto& g = t.grad(table);
        for (int j = 0; j < cols; ++j) g[static_cast<std::size_t>(index) * cols + j] += n.grad[j];
    });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    return push({scalar(a) + scalar(b)}, [a, b](Tape& t, Node& n) {
        t.grad(a)[0] += n.grad[0];
        t.grad(b)[0] += n.grad[0];
    });
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    return push({scalar(a) - scalar(b)}, [a, b](Tape& t, Node& n) {
        t.grad(a)[0] += n.grad[0];
        t.grad(b)[0] -= n.grad[0];
    });
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    return push({scalar(a) * scalar(b)}, [a, b](Tape& t, Node& n) {
        t.grad(a)[0] += n.grad[0] * t.scalar(b);
        t.grad(b)[0] += n.grad[0] * t.scalar(a);
    });
}

Tape::NodeId Tape::scale(NodeId a, double c) {
    return push({scalar(a) * c}, [a, c](Tape& t, Node& n) { t.grad(a)[0] += n.grad[0] * c; });
}

Tape::NodeId Tape::add_const(NodeId a, double c) {
    return push({scalar(a) + c}, [a](Tape& t, Node& n) { t.grad(a)[0] += n.grad[0]; });
}

Tape::NodeId Tape::exp(NodeId a) {
    return push({std::exp(scalar(a))},
                [a](Tape& t, Node& n) { t.grad(a)[0] += n.grad[0] * n.value[0]; });
}

Tape::NodeId Tape::sum(const std::vector<NodeId>& xs) {
    double acc = 0.0;
    for (NodeId id : xs) acc += scalar(id);
    return push({acc}, [xs](Tape& t, Node& n) {
        for (NodeId id : xs) t.grad(id)[0] += n.grad[0];
    });
}

Tape::NodeId Tape::mean(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean: empty");
    return scale(sum(xs), 1.0 / static_cast<double>(xs.size()));
}

Tape::NodeId Tape::cross_entropy(NodeId logits, int label, double temperature) {
    return scale(pick(log_softmax(logits, temperature), label), -1.0);
}

Tape::NodeId Tape::gaussian_logprob(NodeId mean, const std::vector<double>& sample, double sigma) {
    const auto& mu = nodes_[mean].value;
    if (mu.size() != sample.size()) throw std::invalid_argument("gaussian_logprob: size mismatch");
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_logprob: sigma must be > 0");
    const double log_norm = std::log(sigma * std::sqrt(2.0 * 3.14159265358979323846));
    double lp = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double d = sample[i] - mu[i];
        lp += -d * d / (2.0 * sigma * sigma) - log_norm;
    }
    return push({lp}, [mean, sample, sigma](Tape& t, Node& n) {
        const auto& mu = t.nodes_[mean].value;
        auto& g = t.grad(mean);
        for (std::size_t i = 0; i < mu.size(); ++i) {
            g[i] += n.grad[0] * (sample[i] - mu[i]) / (sigma * sigma);
        }
    });
}

Tape::NodeId Tape::smooth_l1(NodeId pred, const std::vector<double>& target, double beta) {
    const auto& p = nodes_[pred].value;
    if (p.size() != target.size() || p.size() % 2 != 0) {
        throw std::invalid_argument("smooth_l1: size mismatch");
    }
    const double n_points = static_cast<double>(p.size()) / 2.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = std::fabs(p[i] - target[i]);
        loss += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
    }
    loss /= n_points;
    return push({loss}, [pred, target, beta, n_points](Tape& t, Node& n) {
        const auto& p = t.nodes_[pred].value;
        auto& g = t.grad(pred);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = p[i] - target[i];
            const double dd = std::fabs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
            g[i] += n.grad[0] * dd / n_points;
        }
    });
}

Tape::NodeId Tape::kl_categorical(NodeId cur_logits, const std::vector<double>& ref_logits,
                                  double temperature) {
    const auto& cur = nodes_[cur_logits].value;
    if (cur.size() != ref_logits.size()) throw std::invalid_argument("kl_categorical: size");
    auto log_probs = [temperature](const std::vector<double>& z) {
        std::vector<double> lp(z.size());
        double zmax = -1e300;
        for (double v : z) zmax = std::max(zmax, v / temperature);
        double lse = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) lse += std::exp(z[i] / temperature - zmax);
        lse = zmax + std::log(lse);
        for (std::size_t i = 0; i < z.size(); ++i) lp[i] = z[i] / temperature - lse;
        return lp;
    };
    const auto lp = log_probs(cur);
    const auto lq = log_probs(ref_logits);
    double kl = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
    return push({kl}, [cur_logits, lp, lq, kl, temperature](Tape& t, Node& n) {
        auto& g = t.grad(cur_logits);
        for (std::size_t i = 0; i < lp.size(); ++i) {
            g[i] += n.grad[0] * std::exp(lp[i]) * ((lp[i] - lq[i]) - kl) / temperature;
        }
    });
}

Tape::NodeId Tape::gaussian_kl(NodeId mean, const std::vector<double>& ref_mean, double sigma) {
    const auto& mu = nodes_[mean].value;
    if (mu.size() != ref_mean.size()) throw std::invalid_argument("gaussian_kl: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double d = mu[i] - ref_mean[i];
        acc += d * d;
    }
    acc /= 2.0 * sigma * sigma;
    return push({acc}, [mean, ref_mean, sigma](Tape& t, Node& n) {
        const auto& mu = t.nodes_[mean].value;
        auto& g = t.grad(mean);
        for (std::size_t i = 0; i < mu.size(); ++i) {
            g[i] += n.grad[0] * (mu[i] - ref_mean[i]) / (sigma * sigma);
        }
    });
}

void Tape::backward(NodeId loss) {
    if (consumed_) throw std::logic_error("Tape::backward: graph already consumed");
    consumed_ = true;
    if (nodes_[loss].value.size() != 1) throw std::logic_error("backward: loss must be scalar");
    nodes_[loss].grad[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        if (nodes_[i].backprop) nodes_[i].backprop(*this, nodes_[i]);
    }
    for (auto& n : nodes_) {
        if (n.param) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
        }
    }
}

std::vector<std::vector<double>> finite_difference(const std::function<double()>& f,
                                                   std::vector<Tensor*> params, double eps) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (Tensor* t : params) {
        std::vector<double> g(t->size());
        for (std::size_t i = 0; i < t->size(); ++i) {
            const double orig = t->value[i];
            t->value[i] = orig + eps;
            const double hi = f();
            t->value[i] = orig - eps;
            const double lo = f();
            t->value[i] = orig;
            g[i] = (hi - lo) / (2.0 * eps);
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace takevla::ad
