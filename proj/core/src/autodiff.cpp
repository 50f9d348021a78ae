#include "amoe/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "amoe/errors.hpp"

namespace amoe {

namespace {
bool any_requires(const std::vector<Node>& parents) {
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

void check_same_shape(const Node& a, const Node& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw DimensionError(std::string(op) + ": " + shape_str(a->value) + " vs " + shape_str(b->value));
}
}  // namespace

Node Tape::leaf(Tensor2 value, bool requires_grad) {
    if (requires_grad && !value.all_finite())
        throw ContractError("leaf parameter contains NaN/Inf");
    auto n = std::make_shared<NodeData>();
    n->grad = Tensor2(value.rows(), value.cols());
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    order_.push_back(n);
    return n;
}

Node Tape::constant(Tensor2 value) { return leaf(std::move(value), false); }

Node Tape::make(Tensor2 value, std::vector<Node> parents, std::function<void(NodeData&)> backprop) {
    auto n = std::make_shared<NodeData>();
    n->grad = Tensor2(value.rows(), value.cols());
    n->value = std::move(value);
    n->requires_grad = any_requires(parents);
    n->parents = std::move(parents);
    if (n->requires_grad) n->backprop = std::move(backprop);
    order_.push_back(n);
    return n;
}

void Tape::backward(const Node& root) {
    if (root->value.rows() != 1 || root->value.cols() != 1)
        throw ContractError("backward root must be 1x1, got " + shape_str(root->value));
    root->grad.at(0, 0) += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        NodeData& n = **it;
        if (n.requires_grad && n.backprop) n.backprop(n);
    }
}

Node matmul(Tape& t, const Node& a, const Node& b) {
    Tensor2 out;
    mm_nn(a->value, b->value, out);
    return t.make(std::move(out), {a, b}, [a, b](NodeData& n) {
        if (a->requires_grad) mm_nt(n.grad, b->value, a->grad, true);  // g * b^T
        if (b->requires_grad) mm_tn(a->value, n.grad, b->grad, true);  // a^T * g
    });
}

Node transpose(Tape& t, const Node& a) {
    const Tensor2& v = a->value;
    Tensor2 out(v.cols(), v.rows());
    for (int i = 0; i < v.rows(); ++i)
        for (int j = 0; j < v.cols(); ++j) out.at(j, i) = v.at(i, j);
    return t.make(std::move(out), {a}, [a](NodeData& n) {
        for (int i = 0; i < n.grad.rows(); ++i)
            for (int j = 0; j < n.grad.cols(); ++j) a->grad.at(j, i) += n.grad.at(i, j);
    });
}

Node add(Tape& t, const Node& a, const Node& b) {
    check_same_shape(a, b, "add");
    Tensor2 out = a->value;
    out.add_scaled(b->value, 1.0);
    return t.make(std::move(out), {a, b}, [a, b](NodeData& n) {
        if (a->requires_grad) a->grad.add_scaled(n.grad, 1.0);
        if (b->requires_grad) b->grad.add_scaled(n.grad, 1.0);
    });
}

Node sub(Tape& t, const Node& a, const Node& b) {
    check_same_shape(a, b, "sub");
    Tensor2 out = a->value;
    out.add_scaled(b->value, -1.0);
    return t.make(std::move(out), {a, b}, [a, b](NodeData& n) {
        if (a->requires_grad) a->grad.add_scaled(n.grad, 1.0);
        if (b->requires_grad) b->grad.add_scaled(n.grad, -1.0);
    });
}

Node hadamard(Tape& t, const Node& a, const Node& b) {
    check_same_shape(a, b, "hadamard");
    Tensor2 out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b->value.data()[i];
    return t.make(std::move(out), {a, b}, [a, b](NodeData& n) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                a->grad.data()[i] += n.grad.data()[i] * b->value.data()[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                b->grad.data()[i] += n.grad.data()[i] * a->value.data()[i];
    });
}

Node scale(Tape& t, const Node& a, double c) {
    Tensor2 out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
    return t.make(std::move(out), {a}, [a, c](NodeData& n) { a->grad.add_scaled(n.grad, c); });
}

Node tanh_map(Tape& t, const Node& a) {
    Tensor2 out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
    return t.make(std::move(out), {a}, [a](NodeData& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double y = n.value.data()[i];
            a->grad.data()[i] += n.grad.data()[i] * (1.0 - y * y);
        }
    });
}

Node add_rowvec(Tape& t, const Node& m, const Node& row) {
    if (row->value.rows() != 1 || row->value.cols() != m->value.cols())
        throw DimensionError("add_rowvec: " + shape_str(m->value) + " + " + shape_str(row->value));
    Tensor2 out = m->value;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) += row->value.at(0, j);
    return t.make(std::move(out), {m, row}, [m, row](NodeData& n) {
        if (m->requires_grad) m->grad.add_scaled(n.grad, 1.0);
        if (row->requires_grad)
            for (int i = 0; i < n.grad.rows(); ++i)
                for (int j = 0; j < n.grad.cols(); ++j) row->grad.at(0, j) += n.grad.at(i, j);
    });
}

Node scale_rows(Tape& t, const Node& m, const Node& col) {
    if (col->value.cols() != 1 || col->value.rows() != m->value.rows())
        throw DimensionError("scale_rows: " + shape_str(m->value) + " by " + shape_str(col->value));
    Tensor2 out = m->value;
    for (int i = 0; i < out.rows(); ++i) {
        const double c = col->value.at(i, 0);
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) *= c;
    }
    return t.make(std::move(out), {m, col}, [m, col](NodeData& n) {
        for (int i = 0; i < n.grad.rows(); ++i) {
            const double c = col->value.at(i, 0);
            double dc = 0.0;
            for (int j = 0; j < n.grad.cols(); ++j) {
                const double g = n.grad.at(i, j);
                if (m->requires_grad) m->grad.at(i, j) += g * c;
                dc += g * m->value.at(i, j);
            }
            if (col->requires_grad) col->grad.at(i, 0) += dc;
        }
    });
}

Node softmax_rows(Tape& t, const Node& a) {
    const Tensor2& v = a->value;
    if (v.cols() < 1) throw DimensionError("softmax_rows: empty rows");
    Tensor2 out(v.rows(), v.cols());
    for (int i = 0; i < v.rows(); ++i) {
        double mx = v.at(i, 0);
        for (int j = 1; j < v.cols(); ++j) mx = std::max(mx, v.at(i, j));
        double z = 0.0;
        for (int j = 0; j < v.cols(); ++j) z += (out.at(i, j) = std::exp(v.at(i, j) - mx));
        for (int j = 0; j < v.cols(); ++j) out.at(i, j) /= z;
    }
    return t.make(std::move(out), {a}, [a](NodeData& n) {
        // dx = y .* (g - sum_j(g_j * y_j)) per row
        for (int i = 0; i < n.grad.rows(); ++i) {
            double dot = 0.0;
            for (int j = 0; j < n.grad.cols(); ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
            for (int j = 0; j < n.grad.cols(); ++j)
                a->grad.at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

Node mean_rows(Tape& t, const Node& a) {
    const Tensor2& v = a->value;
    if (v.rows() < 1) throw DimensionError("mean_rows: no rows");
    Tensor2 out(1, v.cols());
    for (int i = 0; i < v.rows(); ++i)
        for (int j = 0; j < v.cols(); ++j) out.at(0, j) += v.at(i, j);
    for (int j = 0; j < v.cols(); ++j) out.at(0, j) /= v.rows();
    const double inv = 1.0 / v.rows();
    return t.make(std::move(out), {a}, [a, inv](NodeData& n) {
        for (int i = 0; i < a->grad.rows(); ++i)
            for (int j = 0; j < a->grad.cols(); ++j) a->grad.at(i, j) += n.grad.at(0, j) * inv;
    });
}

Node sum_all(Tape& t, const Node& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value.data()[i];
    return t.make(Tensor2{{s}}, {a}, [a](NodeData& n) {
        a->grad.add_scaled(Tensor2::full(a->grad.rows(), a->grad.cols(), n.grad.at(0, 0)), 1.0);
    });
}

Node slice_rows(Tape& t, const Node& a, int first, int count) {
    const Tensor2& v = a->value;
    if (first < 0 || count < 0 || first + count > v.rows())
        throw DimensionError("slice_rows out of range of " + shape_str(v));
    Tensor2 out(count, v.cols());
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < v.cols(); ++j) out.at(i, j) = v.at(first + i, j);
    return t.make(std::move(out), {a}, [a, first](NodeData& n) {
        for (int i = 0; i < n.grad.rows(); ++i)
            for (int j = 0; j < n.grad.cols(); ++j) a->grad.at(first + i, j) += n.grad.at(i, j);
    });
}

Node slice_cols(Tape& t, const Node& a, int first, int count) {
    const Tensor2& v = a->value;
    if (first < 0 || count < 0 || first + count > v.cols())
        throw DimensionError("slice_cols out of range of " + shape_str(v));
    Tensor2 out(v.rows(), count);
    for (int i = 0; i < v.rows(); ++i)
        for (int j = 0; j < count; ++j) out.at(i, j) = v.at(i, first + j);
    return t.make(std::move(out), {a}, [a, first](NodeData& n) {
        for (int i = 0; i < n.grad.rows(); ++i)
            for (int j = 0; j < n.grad.cols(); ++j) a->grad.at(i, first + j) += n.grad.at(i, j);
    });
}

Node concat_cols(Tape& t, const std::vector<Node>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    const int rows = parts[0]->value.rows();
    int cols = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != rows) throw DimensionError("concat_cols: row mismatch");
        cols += p->value.cols();
    }
    Tensor2 out(rows, cols);
    int off = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p->value.cols(); ++j) out.at(i, off + j) = p->value.at(i, j);
        off += p->value.cols();
    }
    return t.make(std::move(out), parts, [parts](NodeData& n) {
        int off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad)
                for (int i = 0; i < n.grad.rows(); ++i)
                    for (int j = 0; j < p->grad.cols(); ++j) p->grad.at(i, j) += n.grad.at(i, off + j);
            off += p->value.cols();
        }
    });
}

Node reshape(Tape& t, const Node& a, int rows, int cols) {
    if (static_cast<std::size_t>(rows) * cols != a->value.size())
        throw DimensionError("reshape " + shape_str(a->value) + " to " + std::to_string(rows) + "x" + std::to_string(cols));
    Tensor2 out(rows, cols, std::vector<double>(a->value.data(), a->value.data() + a->value.size()));
    return t.make(std::move(out), {a}, [a](NodeData& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad.data()[i] += n.grad.data()[i];
    });
}

Node embed_rows(Tape& t, const Node& table, const std::vector<int>& ids) {
    const Tensor2& v = table->value;
    Tensor2 out(static_cast<int>(ids.size()), v.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v.rows())
            throw ContractError("embed_rows: id " + std::to_string(ids[i]) + " out of range " + std::to_string(v.rows()));
        for (int j = 0; j < v.cols(); ++j) out.at(static_cast<int>(i), j) = v.at(ids[i], j);
    }
    return t.make(std::move(out), {table}, [table, ids](NodeData& n) {
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < n.grad.cols(); ++j)
                table->grad.at(ids[i], j) += n.grad.at(static_cast<int>(i), j);
    });
}

Node layernorm_rows(Tape& t, const Node& x, const Node& gain, const Node& bias, double eps) {
    const Tensor2& v = x->value;
    const int n = v.cols();
    if (gain->value.rows() != 1 || gain->value.cols() != n || !gain->value.same_shape(bias->value))
        throw DimensionError("layernorm_rows: gain/bias " + shape_str(gain->value));
    Tensor2 out(v.rows(), n);
    auto xhat = std::make_shared<Tensor2>(v.rows(), n);
    auto inv_std = std::make_shared<std::vector<double>>(v.rows());
    for (int i = 0; i < v.rows(); ++i) {
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += v.at(i, j);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = v.at(i, j) - mu;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (int j = 0; j < n; ++j) {
            const double xh = (v.at(i, j) - mu) * is;
            xhat->at(i, j) = xh;
            out.at(i, j) = xh * gain->value.at(0, j) + bias->value.at(0, j);
        }
    }
    return t.make(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std](NodeData& nd) {
        const int n = nd.grad.cols();
        for (int i = 0; i < nd.grad.rows(); ++i) {
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int j = 0; j < n; ++j) {
                const double g = nd.grad.at(i, j);
                const double dxh = g * gain->value.at(0, j);
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xhat->at(i, j);
                if (gain->requires_grad) gain->grad.at(0, j) += g * xhat->at(i, j);
                if (bias->requires_grad) bias->grad.at(0, j) += g;
            }
            if (x->requires_grad) {
                const double is = (*inv_std)[i];
                for (int j = 0; j < n; ++j) {
                    const double dxh = nd.grad.at(i, j) * gain->value.at(0, j);
                    x->grad.at(i, j) += is * (dxh - sum_dxh / n - xhat->at(i, j) * sum_dxh_xh / n);
                }
            }
        }
    });
}

double grad_check(const std::function<Node(Tape&, std::vector<Node>&)>& build,
                  const std::vector<Tensor2*>& params, double eps) {
    if (eps <= 0.0) throw ContractError("grad_check: eps must be > 0");

    std::vector<Tensor2> analytic;
    {
        Tape tape;
        std::vector<Node> leaves;
        Node loss = build(tape, leaves);
        if (leaves.size() != params.size())
            throw ContractError("grad_check: build bound " + std::to_string(leaves.size()) +
                                " leaves for " + std::to_string(params.size()) + " params");
        tape.backward(loss);
        for (const auto& l : leaves) analytic.push_back(l->grad);
    }

    auto loss_value = [&]() {
        Tape tape;
        std::vector<Node> leaves;
        return build(tape, leaves)->value.at(0, 0);
    };

    double max_rel = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor2& theta = *params[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double orig = theta.data()[i];
            theta.data()[i] = orig + eps;
            const double fp = loss_value();
            theta.data()[i] = orig - eps;
            const double fm = loss_value();
            theta.data()[i] = orig;
            const double gn = (fp - fm) / (2.0 * eps);
            const double ga = analytic[p].data()[i];
            const double rel = std::fabs(ga - gn) / std::max(1e-8, std::fabs(ga) + std::fabs(gn));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace amoe
