// Reverse-mode automatic differentiation over matrices. A Tape records the
// forward graph; backward() walks it in reverse. Every operation's adjoint is
// hand-written here and verified against central finite differences in the
// test suite.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "visitgen/tensor.hpp"

namespace visitgen::ag {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    struct Node {
        Matrix val;
        Matrix grad;
        bool needs_grad = false;
        std::function<void(Tape&)> backward;  // empty for leaves/constants
    };

    const Matrix& val(Var v) const { return nodes_[check(v)].val; }
    const Matrix& grad(Var v) const { return nodes_[check(v)].grad; }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    Var constant(Matrix m) { return push(std::move(m), false, {}); }

    // Leaf with gradient tracking (parameters).
    Var leaf(Matrix m) { return push(std::move(m), true, {}); }

    // ------------------------------------------------------------------
    // Elementwise and broadcast arithmetic
    // ------------------------------------------------------------------

    Var add(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        require(A.same_shape(B), "add: shape mismatch");
        Matrix out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] += B.a[i];
        return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
            const Matrix& g = t.grad_of_output();
            t.accumulate(a, g);
            t.accumulate(b, g);
        });
    }

    Var sub(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        require(A.same_shape(B), "sub: shape mismatch");
        Matrix out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] -= B.a[i];
        return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
            const Matrix& g = t.grad_of_output();
            t.accumulate(a, g);
            t.accumulate_scaled(b, g, -1.0);
        });
    }

    // y = alpha * a + beta
    Var affine(Var a, double alpha, double beta) {
        Matrix out = val(a);
        for (double& v : out.a) v = alpha * v + beta;
        return push(std::move(out), needs(a), [a, alpha](Tape& t) {
            t.accumulate_scaled(a, t.grad_of_output(), alpha);
        });
    }

    // y = a + C (no gradient into C)
    Var add_const(Var a, const Matrix& c) {
        const Matrix& A = val(a);
        require(A.same_shape(c), "add_const: shape mismatch");
        Matrix out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] += c.a[i];
        return push(std::move(out), needs(a),
                    [a](Tape& t) { t.accumulate(a, t.grad_of_output()); });
    }

    // y = a .* C (no gradient into C); used for dropout and masking
    Var mul_const(Var a, Matrix c) {
        const Matrix& A = val(a);
        require(A.same_shape(c), "mul_const: shape mismatch");
        Matrix out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] *= c.a[i];
        return push(std::move(out), needs(a), [a, c = std::move(c)](Tape& t) {
            const Matrix& g = t.grad_of_output();
            Matrix gm = g;
            for (std::size_t i = 0; i < gm.size(); ++i) gm.a[i] *= c.a[i];
            t.accumulate(a, gm);
        });
    }

    // Broadcast a 1 x C row (bias) over all rows of a.
    Var add_rowvec(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        require(B.rows == 1 && B.cols == A.cols, "add_rowvec: bias shape mismatch");
        Matrix out = A;
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out(r, c) += B(0, c);
        return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
            const Matrix& g = t.grad_of_output();
            t.accumulate(a, g);
            Matrix gb(1, g.cols);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) gb(0, c) += g(r, c);
            t.accumulate(b, gb);
        });
    }

    // y[r,c] = a[r,c] - col[r,0], col is a Var of shape R x 1
    Var sub_colvec(Var a, Var col) {
        const Matrix& A = val(a);
        const Matrix& C = val(col);
        require(C.rows == A.rows && C.cols == 1, "sub_colvec: column shape mismatch");
        Matrix out = A;
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out(r, c) -= C(r, 0);
        return push(std::move(out), needs(a) || needs(col), [a, col](Tape& t) {
            const Matrix& g = t.grad_of_output();
            t.accumulate(a, g);
            Matrix gc(g.rows, 1);
            for (int r = 0; r < g.rows; ++r) {
                double s = 0.0;
                for (int c = 0; c < g.cols; ++c) s += g(r, c);
                gc(r, 0) = -s;
            }
            t.accumulate(col, gc);
        });
    }

    // y = a - broadcast(x), x a constant R x 1 column
    Var sub_const_col(Var a, const Matrix& x) {
        const Matrix& A = val(a);
        require(x.rows == A.rows && x.cols == 1, "sub_const_col: column shape mismatch");
        Matrix out = A;
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out(r, c) -= x(r, 0);
        return push(std::move(out), needs(a),
                    [a](Tape& t) { t.accumulate(a, t.grad_of_output()); });
    }

    // Elementwise quotient.
    Var div(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        require(A.same_shape(B), "div: shape mismatch");
        Matrix out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] /= B.a[i];
        return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
            const Matrix& g = t.grad_of_output();
            const Matrix& Bv = t.val(b);
            const Matrix& Y = t.val_of_output();
            Matrix ga = g, gb = g;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.a[i] = g.a[i] / Bv.a[i];
                gb.a[i] = -g.a[i] * Y.a[i] / Bv.a[i];
            }
            t.accumulate(a, ga);
            t.accumulate(b, gb);
        });
    }

    // y[r,c] = a[r,c] / s[r,0]
    Var div_colvec(Var a, Var s) {
        const Matrix& A = val(a);
        const Matrix& S = val(s);
        require(S.rows == A.rows && S.cols == 1, "div_colvec: column shape mismatch");
        Matrix out = A;
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out(r, c) /= S(r, 0);
        return push(std::move(out), needs(a) || needs(s), [a, s](Tape& t) {
            const Matrix& g = t.grad_of_output();
            const Matrix& Sv = t.val(s);
            const Matrix& Y = t.val_of_output();
            Matrix ga = g;
            Matrix gs(g.rows, 1);
            for (int r = 0; r < g.rows; ++r) {
                double acc = 0.0;
                for (int c = 0; c < g.cols; ++c) {
                    ga(r, c) = g(r, c) / Sv(r, 0);
                    acc += g(r, c) * Y(r, c);
                }
                gs(r, 0) = -acc / Sv(r, 0);
            }
            t.accumulate(a, ga);
            t.accumulate(s, gs);
        });
    }

    Var square(Var a) {
        Matrix out = val(a);
        for (double& v : out.a) v *= v;
        return push(std::move(out), needs(a), [a](Tape& t) {
            const Matrix& g = t.grad_of_output();
            const Matrix& A = t.val(a);
            Matrix ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] = 2.0 * A.a[i] * g.a[i];
            t.accumulate(a, ga);
        });
    }

    Var log(Var a) {
        Matrix out = val(a);
        for (double& v : out.a) v = std::log(v);
        return push(std::move(out), needs(a), [a](Tape& t) {
            const Matrix& g = t.grad_of_output();
            const Matrix& A = t.val(a);
            Matrix ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] = g.a[i] / A.a[i];
            t.accumulate(a, ga);
        });
    }

    Var relu(Var a) {
        Matrix out = val(a);
        for (double& v : out.a) v = v > 0.0 ? v : 0.0;
        return push(std::move(out), needs(a), [a](Tape& t) {
            const Matrix& g = t.grad_of_output();
            const Matrix& A = t.val(a);
            Matrix ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] = A.a[i] > 0.0 ? g.a[i] : 0.0;
            t.accumulate(a, ga);
        });
    }

    // y = softplus(a) + eps, the positivity map used for mixture weights/scales.
    Var softplus_eps(Var a, double eps) {
        Matrix out = val(a);
        for (double& v : out.a) v = std::log1p(std::exp(-std::abs(v))) + std::max(v, 0.0) + eps;
        return push(std::move(out), needs(a), [a](Tape& t) {
            const Matrix& g = t.grad_of_output();
            const Matrix& A = t.val(a);
            Matrix ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga.a[i] = g.a[i] / (1.0 + std::exp(-A.a[i]));
            t.accumulate(a, ga);
        });
    }

    // ------------------------------------------------------------------
    // Linear algebra
    // ------------------------------------------------------------------

    Var matmul(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        require(A.cols == B.rows, "matmul: inner dim mismatch");
        Matrix out(A.rows, B.cols);
        matmul_acc(A, B, out);
        return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
            const Matrix& g = t.grad_of_output();
            if (t.needs(a)) {
                Matrix ga(t.val(a).rows, t.val(a).cols);
                matmul_nt_acc(g, t.val(b), ga);  // dA = g * B^T
                t.accumulate(a, ga);
            }
            if (t.needs(b)) {
                Matrix gb(t.val(b).rows, t.val(b).cols);
                matmul_tn_acc(t.val(a), g, gb);  // dB = A^T * g
                t.accumulate(b, gb);
            }
        });
    }

    // y = a * b^T
    Var matmul_nt(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        require(A.cols == B.cols, "matmul_nt: inner dim mismatch");
        Matrix out(A.rows, B.rows);
        matmul_nt_acc(A, B, out);
        return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
            const Matrix& g = t.grad_of_output();
            if (t.needs(a)) {
                Matrix ga(t.val(a).rows, t.val(a).cols);
                matmul_acc(g, t.val(b), ga);  // dA = g * B
                t.accumulate(a, ga);
            }
            if (t.needs(b)) {
                Matrix gb(t.val(b).rows, t.val(b).cols);
                matmul_tn_acc(g, t.val(a), gb);  // dB = g^T * A
                t.accumulate(b, gb);
            }
        });
    }

    // ------------------------------------------------------------------
    // Shape plumbing
    // ------------------------------------------------------------------

    Var concat_cols(const std::vector<Var>& parts) {
        require(!parts.empty(), "concat_cols: empty");
        int rows = val(parts[0]).rows;
        int cols = 0;
        bool any = false;
        for (Var p : parts) {
            require(val(p).rows == rows, "concat_cols: row mismatch");
            cols += val(p).cols;
            any = any || needs(p);
        }
        Matrix out(rows, cols);
        int off = 0;
        for (Var p : parts) {
            const Matrix& P = val(p);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < P.cols; ++c) out(r, off + c) = P(r, c);
            off += P.cols;
        }
        return push(std::move(out), any, [parts](Tape& t) {
            const Matrix& g = t.grad_of_output();
            int off = 0;
            for (Var p : parts) {
                const Matrix& P = t.val(p);
                if (t.needs(p)) {
                    Matrix gp(P.rows, P.cols);
                    for (int r = 0; r < P.rows; ++r)
                        for (int c = 0; c < P.cols; ++c) gp(r, c) = g(r, off + c);
                    t.accumulate(p, gp);
                }
                off += P.cols;
            }
        });
    }

    Var slice_cols(Var a, int c0, int c1) {
        const Matrix& A = val(a);
        require(0 <= c0 && c0 < c1 && c1 <= A.cols, "slice_cols: bad range");
        Matrix out(A.rows, c1 - c0);
        for (int r = 0; r < A.rows; ++r)
            for (int c = c0; c < c1; ++c) out(r, c - c0) = A(r, c);
        return push(std::move(out), needs(a), [a, c0](Tape& t) {
            const Matrix& g = t.grad_of_output();
            Matrix ga(t.val(a).rows, t.val(a).cols);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) ga(r, c0 + c) = g(r, c);
            t.accumulate(a, ga);
        });
    }

    Var slice_rows(Var a, int r0, int r1) {
        const Matrix& A = val(a);
        require(0 <= r0 && r0 < r1 && r1 <= A.rows, "slice_rows: bad range");
        Matrix out(r1 - r0, A.cols);
        for (int r = r0; r < r1; ++r)
            for (int c = 0; c < A.cols; ++c) out(r - r0, c) = A(r, c);
        return push(std::move(out), needs(a), [a, r0](Tape& t) {
            const Matrix& g = t.grad_of_output();
            Matrix ga(t.val(a).rows, t.val(a).cols);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) ga(r0 + r, c) = g(r, c);
            t.accumulate(a, ga);
        });
    }

    // Embedding lookup: out row r = table row idx[r].
    Var gather_rows(Var table, std::vector<int> idx) {
        const Matrix& T = val(table);
        Matrix out(static_cast<int>(idx.size()), T.cols);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            require(idx[r] >= 0 && idx[r] < T.rows, "gather_rows: index out of range");
            for (int c = 0; c < T.cols; ++c) out(static_cast<int>(r), c) = T(idx[r], c);
        }
        return push(std::move(out), needs(table), [table, idx = std::move(idx)](Tape& t) {
            const Matrix& g = t.grad_of_output();
            Matrix gt(t.val(table).rows, t.val(table).cols);
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (int c = 0; c < g.cols; ++c) gt(idx[r], c) += g(static_cast<int>(r), c);
            t.accumulate(table, gt);
        });
    }

    // out[r,0] = a[r, ids[r]]
    Var pick_per_row(Var a, std::vector<int> ids) {
        const Matrix& A = val(a);
        require(static_cast<int>(ids.size()) == A.rows, "pick_per_row: id count mismatch");
        Matrix out(A.rows, 1);
        for (int r = 0; r < A.rows; ++r) {
            require(ids[static_cast<std::size_t>(r)] >= 0 &&
                        ids[static_cast<std::size_t>(r)] < A.cols,
                    "pick_per_row: id out of range");
            out(r, 0) = A(r, ids[static_cast<std::size_t>(r)]);
        }
        return push(std::move(out), needs(a), [a, ids = std::move(ids)](Tape& t) {
            const Matrix& g = t.grad_of_output();
            Matrix ga(t.val(a).rows, t.val(a).cols);
            for (int r = 0; r < ga.rows; ++r)
                ga(r, ids[static_cast<std::size_t>(r)]) += g(r, 0);
            t.accumulate(a, ga);
        });
    }

    Var rowsum(Var a) {
        const Matrix& A = val(a);
        Matrix out(A.rows, 1);
        for (int r = 0; r < A.rows; ++r) {
            double s = 0.0;
            for (int c = 0; c < A.cols; ++c) s += A(r, c);
            out(r, 0) = s;
        }
        return push(std::move(out), needs(a), [a](Tape& t) {
            const Matrix& g = t.grad_of_output();
            Matrix ga(t.val(a).rows, t.val(a).cols);
            for (int r = 0; r < ga.rows; ++r)
                for (int c = 0; c < ga.cols; ++c) ga(r, c) = g(r, 0);
            t.accumulate(a, ga);
        });
    }

    // ------------------------------------------------------------------
    // Rowwise nonlinear reductions
    // ------------------------------------------------------------------

    // Softmax over each row of (a + mask); mask entries of -inf knock columns
    // out exactly. Every row must keep at least one finite entry.
    Var softmax_rows(Var a, const Matrix* add_mask = nullptr) {
        const Matrix& A = val(a);
        if (add_mask) require(A.same_shape(*add_mask), "softmax_rows: mask shape mismatch");
        Matrix out(A.rows, A.cols);
        for (int r = 0; r < A.rows; ++r) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < A.cols; ++c) {
                const double v = A(r, c) + (add_mask ? (*add_mask)(r, c) : 0.0);
                if (v > mx) mx = v;
            }
            require(std::isfinite(mx), "softmax_rows: fully masked row");
            double z = 0.0;
            for (int c = 0; c < A.cols; ++c) {
                const double v = A(r, c) + (add_mask ? (*add_mask)(r, c) : 0.0);
                out(r, c) = std::exp(v - mx);
                z += out(r, c);
            }
            for (int c = 0; c < A.cols; ++c) out(r, c) /= z;
        }
        return push(std::move(out), needs(a), [a](Tape& t) {
            const Matrix& g = t.grad_of_output();
            const Matrix& Y = t.val_of_output();
            Matrix ga(Y.rows, Y.cols);
            for (int r = 0; r < Y.rows; ++r) {
                double dot = 0.0;
                for (int c = 0; c < Y.cols; ++c) dot += g(r, c) * Y(r, c);
                for (int c = 0; c < Y.cols; ++c) ga(r, c) = Y(r, c) * (g(r, c) - dot);
            }
            t.accumulate(a, ga);
        });
    }

    Var logsumexp_rows(Var a) {
        const Matrix& A = val(a);
        Matrix out(A.rows, 1);
        for (int r = 0; r < A.rows; ++r) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < A.cols; ++c) mx = std::max(mx, A(r, c));
            double z = 0.0;
            for (int c = 0; c < A.cols; ++c) z += std::exp(A(r, c) - mx);
            out(r, 0) = mx + std::log(z);
        }
        return push(std::move(out), needs(a), [a](Tape& t) {
            const Matrix& g = t.grad_of_output();
            const Matrix& A2 = t.val(a);
            const Matrix& Y = t.val_of_output();
            Matrix ga(A2.rows, A2.cols);
            for (int r = 0; r < A2.rows; ++r)
                for (int c = 0; c < A2.cols; ++c)
                    ga(r, c) = g(r, 0) * std::exp(A2(r, c) - Y(r, 0));
            t.accumulate(a, ga);
        });
    }

    // Row layer normalization with learnable gain/bias (1 x C each).
    Var layernorm_rows(Var a, Var gamma, Var beta, double eps) {
        const Matrix& A = val(a);
        const Matrix& G = val(gamma);
        const Matrix& B = val(beta);
        require(G.rows == 1 && G.cols == A.cols && B.rows == 1 && B.cols == A.cols,
                "layernorm_rows: gain/bias shape mismatch");
        Matrix out(A.rows, A.cols);
        Matrix xhat(A.rows, A.cols);
        std::vector<double> inv_std(static_cast<std::size_t>(A.rows));
        for (int r = 0; r < A.rows; ++r) {
            double mean = 0.0;
            for (int c = 0; c < A.cols; ++c) mean += A(r, c);
            mean /= A.cols;
            double var = 0.0;
            for (int c = 0; c < A.cols; ++c) {
                const double d = A(r, c) - mean;
                var += d * d;
            }
            var /= A.cols;
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(r)] = is;
            for (int c = 0; c < A.cols; ++c) {
                xhat(r, c) = (A(r, c) - mean) * is;
                out(r, c) = xhat(r, c) * G(0, c) + B(0, c);
            }
        }
        return push(std::move(out), needs(a) || needs(gamma) || needs(beta),
                    [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
                        const Matrix& g = t.grad_of_output();
                        const Matrix& G = t.val(gamma);
                        const int C = g.cols;
                        if (t.needs(gamma)) {
                            Matrix gg(1, C);
                            for (int r = 0; r < g.rows; ++r)
                                for (int c = 0; c < C; ++c) gg(0, c) += g(r, c) * xhat(r, c);
                            t.accumulate(gamma, gg);
                        }
                        if (t.needs(beta)) {
                            Matrix gb(1, C);
                            for (int r = 0; r < g.rows; ++r)
                                for (int c = 0; c < C; ++c) gb(0, c) += g(r, c);
                            t.accumulate(beta, gb);
                        }
                        if (t.needs(a)) {
                            Matrix ga(g.rows, C);
                            for (int r = 0; r < g.rows; ++r) {
                                double m1 = 0.0, m2 = 0.0;
                                for (int c = 0; c < C; ++c) {
                                    const double gy = g(r, c) * G(0, c);
                                    m1 += gy;
                                    m2 += gy * xhat(r, c);
                                }
                                m1 /= C;
                                m2 /= C;
                                for (int c = 0; c < C; ++c) {
                                    const double gy = g(r, c) * G(0, c);
                                    ga(r, c) = (gy - m1 - xhat(r, c) * m2) *
                                               inv_std[static_cast<std::size_t>(r)];
                                }
                            }
                            t.accumulate(a, ga);
                        }
                    });
    }

    // ------------------------------------------------------------------
    // Time encoding: slot 0 linear, slots >= 1 sinusoidal. t is constant.
    // ------------------------------------------------------------------

    Var time2vec(Var omega, Var phi, Matrix t_col) {
        const Matrix& W = val(omega);
        const Matrix& P = val(phi);
        require(W.rows == 1 && P.rows == 1 && W.cols == P.cols, "time2vec: parameter shape");
        require(t_col.cols == 1, "time2vec: t must be a column");
        const int D = W.cols;
        Matrix out(t_col.rows, D);
        for (int r = 0; r < t_col.rows; ++r) {
            const double t = t_col(r, 0);
            out(r, 0) = W(0, 0) * t + P(0, 0);
            for (int d = 1; d < D; ++d) out(r, d) = std::sin(W(0, d) * t + P(0, d));
        }
        return push(std::move(out), needs(omega) || needs(phi),
                    [omega, phi, t_col = std::move(t_col)](Tape& t) {
                        const Matrix& g = t.grad_of_output();
                        const Matrix& W = t.val(omega);
                        const Matrix& P = t.val(phi);
                        const int D = W.cols;
                        Matrix gw(1, D), gp(1, D);
                        for (int r = 0; r < g.rows; ++r) {
                            const double tv = t_col(r, 0);
                            gw(0, 0) += g(r, 0) * tv;
                            gp(0, 0) += g(r, 0);
                            for (int d = 1; d < D; ++d) {
                                const double c = std::cos(W(0, d) * tv + P(0, d));
                                gw(0, d) += g(r, d) * tv * c;
                                gp(0, d) += g(r, d) * c;
                            }
                        }
                        t.accumulate(omega, gw);
                        t.accumulate(phi, gp);
                    });
    }

    // ------------------------------------------------------------------
    // Reduction to a scalar loss
    // ------------------------------------------------------------------

    // out = sum(a .* w), a 1x1 node.
    Var weighted_sum(Var a, Matrix w) {
        const Matrix& A = val(a);
        require(A.same_shape(w), "weighted_sum: shape mismatch");
        double s = 0.0;
        for (std::size_t i = 0; i < A.size(); ++i) s += A.a[i] * w.a[i];
        Matrix out(1, 1);
        out(0, 0) = s;
        return push(std::move(out), needs(a), [a, w = std::move(w)](Tape& t) {
            const double g = t.grad_of_output()(0, 0);
            Matrix ga = w;
            for (double& v : ga.a) v *= g;
            t.accumulate(a, ga);
        });
    }

    // ------------------------------------------------------------------
    // Backward pass
    // ------------------------------------------------------------------

    // Seeds d(root)/d(root) = seed and propagates. root must be 1x1.
    void backward(Var root, double seed = 1.0) {
        require(val(root).rows == 1 && val(root).cols == 1, "backward: root must be scalar");
        for (auto& n : nodes_)
            if (n.needs_grad && n.grad.size() == 0) n.grad = Matrix(n.val.rows, n.val.cols);
        Node& rootn = nodes_[static_cast<std::size_t>(root.id)];
        if (!rootn.needs_grad) return;  // nothing upstream of the loss requires grad
        rootn.grad(0, 0) += seed;
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.needs_grad || !n.backward) continue;
            current_ = i;
            n.backward(*this);
        }
        current_ = -1;
    }

    bool needs(Var v) const { return nodes_[check(v)].needs_grad; }

private:
    std::vector<Node> nodes_;
    int current_ = -1;  // node whose backward is running

    std::size_t check(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ArgumentError("autograd: invalid Var");
        return static_cast<std::size_t>(v.id);
    }

    static void require(bool ok, const char* msg) {
        if (!ok) throw ArgumentError(std::string("autograd: ") + msg);
    }

    Var push(Matrix val, bool needs_grad, std::function<void(Tape&)> bw) {
        Node n;
        n.val = std::move(val);
        n.needs_grad = needs_grad;
        if (needs_grad) n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Matrix& grad_of_output() const { return nodes_[static_cast<std::size_t>(current_)].grad; }
    const Matrix& val_of_output() const { return nodes_[static_cast<std::size_t>(current_)].val; }

    void accumulate(Var v, const Matrix& g) {
        Node& n = nodes_[check(v)];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0) n.grad = Matrix(n.val.rows, n.val.cols);
        for (std::size_t i = 0; i < g.size(); ++i) n.grad.a[i] += g.a[i];
    }

    void accumulate_scaled(Var v, const Matrix& g, double s) {
        Node& n = nodes_[check(v)];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0) n.grad = Matrix(n.val.rows, n.val.cols);
        for (std::size_t i = 0; i < g.size(); ++i) n.grad.a[i] += s * g.a[i];
    }
};

}  // namespace visitgen::ag
