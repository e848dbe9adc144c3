#include "stdit/tensor.hpp"

#include <cmath>
#include <utility>

namespace stdit {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
        throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str());
    }
}

Tensor Tensor::row(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor(1, n, std::move(values));
}

Tensor Tensor::full(std::size_t r, std::size_t c, double value) {
    Tensor t(r, c);
    for (double& v : t.data) v = value;
    return t;
}

std::string Tensor::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes differ: " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

const double kGeluC = std::sqrt(2.0 / M_PI);
constexpr double kGeluCube = 0.044715;

}  // namespace

Graph::NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

Graph::NodeId Graph::input(Tensor value) {
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(value);
    return push(std::move(n));
}

const Tensor& Graph::grad(NodeId id) const {
    const Node& n = nodes_[id];
    if (n.grad.empty()) {
        // backward never reached this node; report zeros lazily
        const_cast<Node&>(n).grad = Tensor(n.val.rows, n.val.cols);
    }
    return n.grad;
}

Tensor& Graph::grad_of(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.val.rows, n.val.cols);
    return n.grad;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    require_same_shape("add", ta, tb);
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.val = ta;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] += tb[i];
    return push(std::move(n));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    require_same_shape("sub", ta, tb);
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.val = ta;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] -= tb[i];
    return push(std::move(n));
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    require_same_shape("mul", ta, tb);
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.val = ta;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] *= tb[i];
    return push(std::move(n));
}

Graph::NodeId Graph::add_rowvec(NodeId m, NodeId v) {
    const Tensor& tm = nodes_[m].val;
    const Tensor& tv = nodes_[v].val;
    if (tv.rows != 1 || tv.cols != tm.cols) {
        throw ShapeError("add_rowvec: shapes differ: " + tm.shape_str() + " vs " +
                         tv.shape_str());
    }
    Node n;
    n.op = Op::AddRowVec;
    n.a = m;
    n.b = v;
    n.val = tm;
    for (std::size_t r = 0; r < tm.rows; ++r)
        for (std::size_t c = 0; c < tm.cols; ++c) n.val.at(r, c) += tv[c];
    return push(std::move(n));
}

Graph::NodeId Graph::mul_rowvec(NodeId m, NodeId v) {
    const Tensor& tm = nodes_[m].val;
    const Tensor& tv = nodes_[v].val;
    if (tv.rows != 1 || tv.cols != tm.cols) {
        throw ShapeError("mul_rowvec: shapes differ: " + tm.shape_str() + " vs " +
                         tv.shape_str());
    }
    Node n;
    n.op = Op::MulRowVec;
    n.a = m;
    n.b = v;
    n.val = tm;
    for (std::size_t r = 0; r < tm.rows; ++r)
        for (std::size_t c = 0; c < tm.cols; ++c) n.val.at(r, c) *= tv[c];
    return push(std::move(n));
}

Graph::NodeId Graph::scale(NodeId a, double s) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.s = s;
    n.val = nodes_[a].val;
    for (double& v : n.val.data) v *= s;
    return push(std::move(n));
}

Graph::NodeId Graph::add_scalar(NodeId a, double s) {
    Node n;
    n.op = Op::AddScalar;
    n.a = a;
    n.s = s;
    n.val = nodes_[a].val;
    for (double& v : n.val.data) v += s;
    return push(std::move(n));
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (ta.cols != tb.rows) {
        throw ShapeError("matmul: inner dimensions differ: " + ta.shape_str() + " vs " +
                         tb.shape_str());
    }
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.val = Tensor(ta.rows, tb.cols);
    for (std::size_t i = 0; i < ta.rows; ++i) {
        for (std::size_t k = 0; k < ta.cols; ++k) {
            double aik = ta.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < tb.cols; ++j) n.val.at(i, j) += aik * tb.at(k, j);
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::matmul_nt(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (ta.cols != tb.cols) {
        throw ShapeError("matmul_nt: inner dimensions differ: " + ta.shape_str() + " vs " +
                         tb.shape_str() + "^T");
    }
    Node n;
    n.op = Op::MatMulNT;
    n.a = a;
    n.b = b;
    n.val = Tensor(ta.rows, tb.rows);
    for (std::size_t i = 0; i < ta.rows; ++i) {
        for (std::size_t j = 0; j < tb.rows; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < ta.cols; ++k) s += ta.at(i, k) * tb.at(j, k);
            n.val.at(i, j) = s;
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::softmax_rows(NodeId a) {
    const Tensor& ta = nodes_[a].val;
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = a;
    n.val = Tensor(ta.rows, ta.cols);
    for (std::size_t r = 0; r < ta.rows; ++r) {
        double maxv = ta.at(r, 0);
        for (std::size_t c = 1; c < ta.cols; ++c) maxv = std::max(maxv, ta.at(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < ta.cols; ++c) {
            double e = std::exp(ta.at(r, c) - maxv);
            n.val.at(r, c) = e;
            sum += e;
        }
        double inv = 1.0 / sum;
        for (std::size_t c = 0; c < ta.cols; ++c) n.val.at(r, c) *= inv;
    }
    return push(std::move(n));
}

Graph::NodeId Graph::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
    const Tensor& tx = nodes_[x].val;
    const Tensor& tg = nodes_[gain].val;
    const Tensor& tb = nodes_[bias].val;
    if (tg.rows != 1 || tg.cols != tx.cols || tb.rows != 1 || tb.cols != tx.cols) {
        throw ShapeError("layer_norm: affine shapes " + tg.shape_str() + "/" + tb.shape_str() +
                         " do not match input " + tx.shape_str());
    }
    Node n;
    n.op = Op::LayerNorm;
    n.a = x;
    n.b = gain;
    n.c = bias;
    n.s = eps;
    n.val = Tensor(tx.rows, tx.cols);
    for (std::size_t r = 0; r < tx.rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < tx.cols; ++c) mean += tx.at(r, c);
        mean /= static_cast<double>(tx.cols);
        double var = 0.0;
        for (std::size_t c = 0; c < tx.cols; ++c) {
            double d = tx.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(tx.cols);
        double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < tx.cols; ++c) {
            n.val.at(r, c) = (tx.at(r, c) - mean) * inv * tg[c] + tb[c];
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::gelu(NodeId a) {
    const Tensor& ta = nodes_[a].val;
    Node n;
    n.op = Op::Gelu;
    n.a = a;
    n.val = Tensor(ta.rows, ta.cols);
    for (std::size_t i = 0; i < ta.size(); ++i) {
        double x = ta[i];
        n.val[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluCube * x * x * x)));
    }
    return push(std::move(n));
}

Graph::NodeId Graph::mean_rows(NodeId a) {
    const Tensor& ta = nodes_[a].val;
    Node n;
    n.op = Op::MeanRows;
    n.a = a;
    n.val = Tensor(1, ta.cols);
    for (std::size_t r = 0; r < ta.rows; ++r)
        for (std::size_t c = 0; c < ta.cols; ++c) n.val[c] += ta.at(r, c);
    for (std::size_t c = 0; c < ta.cols; ++c) n.val[c] /= static_cast<double>(ta.rows);
    return push(std::move(n));
}

Graph::NodeId Graph::sum(NodeId a) {
    const Tensor& ta = nodes_[a].val;
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.val = Tensor(1, 1);
    for (double v : ta.data) n.val[0] += v;
    return push(std::move(n));
}

Graph::NodeId Graph::concat_rows(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (ta.cols != tb.cols) {
        throw ShapeError("concat_rows: column counts differ: " + ta.shape_str() + " vs " +
                         tb.shape_str());
    }
    Node n;
    n.op = Op::ConcatRows;
    n.a = a;
    n.b = b;
    n.val = Tensor(ta.rows + tb.rows, ta.cols);
    std::copy(ta.data.begin(), ta.data.end(), n.val.data.begin());
    std::copy(tb.data.begin(), tb.data.end(), n.val.data.begin() + static_cast<long>(ta.size()));
    return push(std::move(n));
}

Graph::NodeId Graph::concat_cols(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (ta.rows != tb.rows) {
        throw ShapeError("concat_cols: row counts differ: " + ta.shape_str() + " vs " +
                         tb.shape_str());
    }
    Node n;
    n.op = Op::ConcatCols;
    n.a = a;
    n.b = b;
    n.val = Tensor(ta.rows, ta.cols + tb.cols);
    for (std::size_t r = 0; r < ta.rows; ++r) {
        for (std::size_t c = 0; c < ta.cols; ++c) n.val.at(r, c) = ta.at(r, c);
        for (std::size_t c = 0; c < tb.cols; ++c) n.val.at(r, ta.cols + c) = tb.at(r, c);
    }
    return push(std::move(n));
}

Graph::NodeId Graph::slice_row(NodeId a, std::size_t r) {
    const Tensor& ta = nodes_[a].val;
    if (r >= ta.rows) {
        throw IndexError("slice_row: row " + std::to_string(r) + " out of range for " +
                         ta.shape_str());
    }
    Node n;
    n.op = Op::SliceRow;
    n.a = a;
    n.i0 = r;
    n.val = Tensor(1, ta.cols);
    for (std::size_t c = 0; c < ta.cols; ++c) n.val[c] = ta.at(r, c);
    return push(std::move(n));
}

Graph::NodeId Graph::slice_cols(NodeId a, std::size_t c0, std::size_t c1) {
    const Tensor& ta = nodes_[a].val;
    if (c0 >= c1 || c1 > ta.cols) {
        throw IndexError("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                         ") out of range for " + ta.shape_str());
    }
    Node n;
    n.op = Op::SliceCols;
    n.a = a;
    n.i0 = c0;
    n.i1 = c1;
    n.val = Tensor(ta.rows, c1 - c0);
    for (std::size_t r = 0; r < ta.rows; ++r)
        for (std::size_t c = c0; c < c1; ++c) n.val.at(r, c - c0) = ta.at(r, c);
    return push(std::move(n));
}

Graph::NodeId Graph::select_rows(NodeId a, std::vector<std::size_t> idx) {
    const Tensor& ta = nodes_[a].val;
    for (std::size_t r : idx) {
        if (r >= ta.rows) {
            throw IndexError("select_rows: row " + std::to_string(r) + " out of range for " +
                             ta.shape_str());
        }
    }
    Node n;
    n.op = Op::SelectRows;
    n.a = a;
    n.idx = std::move(idx);
    n.val = Tensor(n.idx.size(), ta.cols);
    for (std::size_t i = 0; i < n.idx.size(); ++i)
        for (std::size_t c = 0; c < ta.cols; ++c) n.val.at(i, c) = ta.at(n.idx[i], c);
    return push(std::move(n));
}

Graph::NodeId Graph::masked_mse(NodeId pred, Tensor target, Tensor mask) {
    const Tensor& tp = nodes_[pred].val;
    require_same_shape("masked_mse", tp, target);
    require_same_shape("masked_mse", tp, mask);
    double count = 0.0;
    for (double m : mask.data) count += (m != 0.0) ? 1.0 : 0.0;
    if (count == 0.0) {
        throw ConfigError("masked_mse: mask selects no entries");
    }
    Node n;
    n.op = Op::MaskedMse;
    n.a = pred;
    n.s = count;
    n.val = Tensor(1, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        if (mask[i] != 0.0) {
            double d = tp[i] - target[i];
            acc += d * d;
        }
    }
    n.val[0] = acc / count;
    n.aux0 = std::move(target);
    n.aux1 = std::move(mask);
    return push(std::move(n));
}

void Graph::backward(NodeId root) {
    const Tensor& rv = nodes_[root].val;
    if (rv.rows != 1 || rv.cols != 1) {
        throw ShapeError("backward: root must be 1x1, got " + rv.shape_str());
    }
    grad_of(root)[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
        if (!nodes_[i].grad.empty()) backward_node(i);
    }
}

void Graph::backward_node(NodeId id) {
    Node& n = nodes_[id];
    const Tensor& g = n.grad;
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            Tensor& ga = grad_of(n.a);
            Tensor& gb = grad_of(n.b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
            break;
        }
        case Op::Sub: {
            Tensor& ga = grad_of(n.a);
            Tensor& gb = grad_of(n.b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
            }
            break;
        }
        case Op::Mul: {
            const Tensor& ta = nodes_[n.a].val;
            const Tensor& tb = nodes_[n.b].val;
            Tensor& ga = grad_of(n.a);
            Tensor& gb = grad_of(n.b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * tb[i];
                gb[i] += g[i] * ta[i];
            }
            break;
        }
        case Op::AddRowVec: {
            Tensor& ga = grad_of(n.a);
            Tensor& gv = grad_of(n.b);
            for (std::size_t r = 0; r < g.rows; ++r)
                for (std::size_t c = 0; c < g.cols; ++c) {
                    ga.at(r, c) += g.at(r, c);
                    gv[c] += g.at(r, c);
                }
            break;
        }
        case Op::MulRowVec: {
            const Tensor& ta = nodes_[n.a].val;
            const Tensor& tv = nodes_[n.b].val;
            Tensor& ga = grad_of(n.a);
            Tensor& gv = grad_of(n.b);
            for (std::size_t r = 0; r < g.rows; ++r)
                for (std::size_t c = 0; c < g.cols; ++c) {
                    ga.at(r, c) += g.at(r, c) * tv[c];
                    gv[c] += g.at(r, c) * ta.at(r, c);
                }
            break;
        }
        case Op::Scale: {
            Tensor& ga = grad_of(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.s;
            break;
        }
        case Op::AddScalar: {
            Tensor& ga = grad_of(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            break;
        }
        case Op::MatMul: {
            const Tensor& ta = nodes_[n.a].val;
            const Tensor& tb = nodes_[n.b].val;
            Tensor& ga = grad_of(n.a);
            Tensor& gb = grad_of(n.b);
            // ga += g * b^T
            for (std::size_t i = 0; i < ta.rows; ++i)
                for (std::size_t k = 0; k < ta.cols; ++k) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < tb.cols; ++j) s += g.at(i, j) * tb.at(k, j);
                    ga.at(i, k) += s;
                }
            // gb += a^T * g
            for (std::size_t k = 0; k < tb.rows; ++k)
                for (std::size_t j = 0; j < tb.cols; ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < ta.rows; ++i) s += ta.at(i, k) * g.at(i, j);
                    gb.at(k, j) += s;
                }
            break;
        }
        case Op::MatMulNT: {
            // y = a * b^T ; ga += g * b ; gb += g^T * a
            const Tensor& ta = nodes_[n.a].val;
            const Tensor& tb = nodes_[n.b].val;
            Tensor& ga = grad_of(n.a);
            Tensor& gb = grad_of(n.b);
            for (std::size_t i = 0; i < ta.rows; ++i)
                for (std::size_t k = 0; k < ta.cols; ++k) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < tb.rows; ++j) s += g.at(i, j) * tb.at(j, k);
                    ga.at(i, k) += s;
                }
            for (std::size_t j = 0; j < tb.rows; ++j)
                for (std::size_t k = 0; k < tb.cols; ++k) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < ta.rows; ++i) s += g.at(i, j) * ta.at(i, k);
                    gb.at(j, k) += s;
                }
            break;
        }
        case Op::SoftmaxRows: {
            Tensor& ga = grad_of(n.a);
            const Tensor& y = n.val;
            for (std::size_t r = 0; r < y.rows; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < y.cols; ++c) dot += g.at(r, c) * y.at(r, c);
                for (std::size_t c = 0; c < y.cols; ++c)
                    ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& tx = nodes_[n.a].val;
            const Tensor& tg = nodes_[n.b].val;
            Tensor& gx = grad_of(n.a);
            Tensor& ggain = grad_of(n.b);
            Tensor& gbias = grad_of(n.c);
            const double cols = static_cast<double>(tx.cols);
            for (std::size_t r = 0; r < tx.rows; ++r) {
                double mean = 0.0;
                for (std::size_t c = 0; c < tx.cols; ++c) mean += tx.at(r, c);
                mean /= cols;
                double var = 0.0;
                for (std::size_t c = 0; c < tx.cols; ++c) {
                    double d = tx.at(r, c) - mean;
                    var += d * d;
                }
                var /= cols;
                double inv = 1.0 / std::sqrt(var + n.s);
                // gy = dL/d(normalized) = g * gain ; then standard layer-norm pullback
                double gy_mean = 0.0, gyx_mean = 0.0;
                for (std::size_t c = 0; c < tx.cols; ++c) {
                    double xhat = (tx.at(r, c) - mean) * inv;
                    double gy = g.at(r, c) * tg[c];
                    gy_mean += gy;
                    gyx_mean += gy * xhat;
                    ggain[c] += g.at(r, c) * xhat;
                    gbias[c] += g.at(r, c);
                }
                gy_mean /= cols;
                gyx_mean /= cols;
                for (std::size_t c = 0; c < tx.cols; ++c) {
                    double xhat = (tx.at(r, c) - mean) * inv;
                    double gy = g.at(r, c) * tg[c];
                    gx.at(r, c) += (gy - gy_mean - xhat * gyx_mean) * inv;
                }
            }
            break;
        }
        case Op::Gelu: {
            const Tensor& tx = nodes_[n.a].val;
            Tensor& ga = grad_of(n.a);
            for (std::size_t i = 0; i < tx.size(); ++i) {
                double x = tx[i];
                double u = kGeluC * (x + kGeluCube * x * x * x);
                double t = std::tanh(u);
                double sech2 = 1.0 - t * t;
                double du = kGeluC * (1.0 + 3.0 * kGeluCube * x * x);
                ga[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * x * sech2 * du);
            }
            break;
        }
        case Op::MeanRows: {
            const Tensor& ta = nodes_[n.a].val;
            Tensor& ga = grad_of(n.a);
            double inv = 1.0 / static_cast<double>(ta.rows);
            for (std::size_t r = 0; r < ta.rows; ++r)
                for (std::size_t c = 0; c < ta.cols; ++c) ga.at(r, c) += g[c] * inv;
            break;
        }
        case Op::Sum: {
            Tensor& ga = grad_of(n.a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
            break;
        }
        case Op::ConcatRows: {
            const Tensor& ta = nodes_[n.a].val;
            Tensor& ga = grad_of(n.a);
            Tensor& gb = grad_of(n.b);
            for (std::size_t i = 0; i < ta.size(); ++i) ga[i] += g[i];
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[ta.size() + i];
            break;
        }
        case Op::ConcatCols: {
            const Tensor& ta = nodes_[n.a].val;
            const Tensor& tb = nodes_[n.b].val;
            Tensor& ga = grad_of(n.a);
            Tensor& gb = grad_of(n.b);
            for (std::size_t r = 0; r < ta.rows; ++r) {
                for (std::size_t c = 0; c < ta.cols; ++c) ga.at(r, c) += g.at(r, c);
                for (std::size_t c = 0; c < tb.cols; ++c) gb.at(r, c) += g.at(r, ta.cols + c);
            }
            break;
        }
        case Op::SliceRow: {
            Tensor& ga = grad_of(n.a);
            for (std::size_t c = 0; c < g.cols; ++c) ga.at(n.i0, c) += g[c];
            break;
        }
        case Op::SliceCols: {
            Tensor& ga = grad_of(n.a);
            for (std::size_t r = 0; r < g.rows; ++r)
                for (std::size_t c = 0; c < g.cols; ++c) ga.at(r, n.i0 + c) += g.at(r, c);
            break;
        }
        case Op::SelectRows: {
            Tensor& ga = grad_of(n.a);
            for (std::size_t i = 0; i < n.idx.size(); ++i)
                for (std::size_t c = 0; c < g.cols; ++c) ga.at(n.idx[i], c) += g.at(i, c);
            break;
        }
        case Op::MaskedMse: {
            const Tensor& tp = nodes_[n.a].val;
            Tensor& ga = grad_of(n.a);
            double scale = 2.0 * g[0] / n.s;
            for (std::size_t i = 0; i < tp.size(); ++i) {
                if (n.aux1[i] != 0.0) ga[i] += scale * (tp[i] - n.aux0[i]);
            }
            break;
        }
    }
}

double grad_check(
    const std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>& build,
    const std::vector<Tensor>& inputs, double h) {
    auto evaluate = [&](Graph& g, const std::vector<Tensor>& point,
                        std::vector<Graph::NodeId>* leaf_ids) {
        std::vector<Graph::NodeId> ids;
        ids.reserve(point.size());
        for (const Tensor& t : point) ids.push_back(g.input(t));
        Graph::NodeId root = build(g, ids);
        const Tensor& out = g.value(root);
        if (out.rows != 1 || out.cols != 1) {
            throw ShapeError("grad_check: function must be scalar-valued, got " +
                             out.shape_str());
        }
        if (!std::isfinite(out[0])) {
            throw NumericError("grad_check: function value is not finite");
        }
        if (leaf_ids) {
            *leaf_ids = std::move(ids);
            g.backward(root);
        }
        return out[0];
    };

    Graph g;
    std::vector<Graph::NodeId> ids;
    evaluate(g, inputs, &ids);

    double worst = 0.0;
    std::vector<Tensor> point = inputs;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        const Tensor& analytic = g.grad(ids[ti]);
        for (std::size_t i = 0; i < point[ti].size(); ++i) {
            double orig = point[ti][i];
            point[ti][i] = orig + h;
            Graph gp;
            double fp = evaluate(gp, point, nullptr);
            point[ti][i] = orig - h;
            Graph gm;
            double fm = evaluate(gm, point, nullptr);
            point[ti][i] = orig;
            double cd = (fp - fm) / (2.0 * h);
            double rel = std::fabs(analytic[i] - cd) /
                         (std::fabs(analytic[i]) + std::fabs(cd) + 1e-12);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace stdit
