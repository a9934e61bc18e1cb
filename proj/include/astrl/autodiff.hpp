#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "astrl/error.hpp"

namespace astrl::ad {

using Mat = Eigen::MatrixXd;

/// Trainable tensor. Gradients accumulate across backward passes until zeroed.
struct Param {
    std::string name;
    std::string group;
    Mat value;
    Mat grad;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Reverse-mode tape over dense matrices. Variables are indices into the tape;
/// parameter leaves alias their Param so gradients land there directly.
class Tape {
public:
    using Var = int;

    Var constant(Mat v) { return push(std::move(v), {}); }

    Var param(Param* p)
    {
        Node nd;
        nd.param = p;
        nodes_.push_back(std::move(nd));
        return static_cast<Var>(nodes_.size()) - 1;
    }

    [[nodiscard]] const Mat& value(Var v) const
    {
        const auto& nd = nodes_[static_cast<std::size_t>(v)];
        return nd.param ? nd.param->value : nd.value;
    }

    [[nodiscard]] double scalar(Var v) const { return value(v)(0, 0); }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // ---- ops --------------------------------------------------------------

    Var matmul(Var a, Var b)
    {
        Mat y = value(a) * value(b);
        return push(std::move(y), [a, b](Tape& t, const Mat& g) {
            if (t.needs(a)) t.acc(a, g * t.value(b).transpose());
            if (t.needs(b)) t.acc(b, t.value(a).transpose() * g);
        });
    }

    /// a * W[r0 : r0 + a.cols(), :], for a split first layer.
    Var matmul_rows(Var a, Var w, int r0)
    {
        const int k = static_cast<int>(value(a).cols());
        Mat y = value(a) * value(w).middleRows(r0, k);
        return push(std::move(y), [a, w, r0, k](Tape& t, const Mat& g) {
            if (t.needs(a)) t.acc(a, g * t.value(w).middleRows(r0, k).transpose());
            if (t.needs(w)) t.acc_rows(w, r0, t.value(a).transpose() * g);
        });
    }

    Var add(Var a, Var b)
    {
        Mat y = value(a) + value(b);
        return push(std::move(y), [a, b](Tape& t, const Mat& g) {
            if (t.needs(a)) t.acc(a, g);
            if (t.needs(b)) t.acc(b, g);
        });
    }

    /// a + row, with the 1 x c row broadcast over a's rows.
    Var add_row(Var a, Var row)
    {
        Mat y = value(a).rowwise() + value(row).row(0);
        return push(std::move(y), [a, row](Tape& t, const Mat& g) {
            if (t.needs(a)) t.acc(a, g);
            if (t.needs(row)) t.acc(row, g.colwise().sum());
        });
    }

    Var relu(Var a)
    {
        Mat y = value(a).cwiseMax(0.0);
        return push(std::move(y), [a](Tape& t, const Mat& g) {
            if (!t.needs(a)) return;
            Mat d = (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(g);
            t.acc(a, d);
        });
    }

    /// (1 + s) * a for a 1x1 variable s.
    Var one_plus_scale(Var a, Var s)
    {
        const double f = 1.0 + scalar(s);
        Mat y = f * value(a);
        return push(std::move(y), [a, s](Tape& t, const Mat& g) {
            if (t.needs(a)) t.acc(a, (1.0 + t.scalar(s)) * g);
            if (t.needs(s)) t.acc(s, Mat::Constant(1, 1, t.value(a).cwiseProduct(g).sum()));
        });
    }

    Var gather_rows(Var a, std::vector<int> idx)
    {
        const auto& av = value(a);
        Mat y(static_cast<Eigen::Index>(idx.size()), av.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = av.row(idx[i]);
        return push(std::move(y), [a, idx = std::move(idx)](Tape& t, const Mat& g) {
            if (!t.needs(a)) return;
            Mat& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        });
    }

    /// y[idx[i]] += a[i]; y has `rows` rows.
    Var scatter_add_rows(Var a, std::vector<int> idx, int rows)
    {
        const auto& av = value(a);
        Mat y = Mat::Zero(rows, av.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) y.row(idx[i]) += av.row(static_cast<Eigen::Index>(i));
        return push(std::move(y), [a, idx = std::move(idx)](Tape& t, const Mat& g) {
            if (!t.needs(a)) return;
            Mat& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < idx.size(); ++i) ga.row(static_cast<Eigen::Index>(i)) += g.row(idx[i]);
        });
    }

    Var sum_rows(Var a)
    {
        Mat y = value(a).colwise().sum();
        return push(std::move(y), [a](Tape& t, const Mat& g) {
            if (!t.needs(a)) return;
            t.acc(a, g.replicate(t.value(a).rows(), 1));
        });
    }

    Var concat_cols(const std::vector<Var>& parts)
    {
        Eigen::Index rows = value(parts.front()).rows(), cols = 0;
        for (Var p : parts) cols += value(p).cols();
        Mat y(rows, cols);
        Eigen::Index c = 0;
        for (Var p : parts) {
            y.middleCols(c, value(p).cols()) = value(p);
            c += value(p).cols();
        }
        return push(std::move(y), [parts](Tape& t, const Mat& g) {
            Eigen::Index c0 = 0;
            for (Var p : parts) {
                const auto w = t.value(p).cols();
                if (t.needs(p)) t.acc(p, g.middleCols(c0, w));
                c0 += w;
            }
        });
    }

    Var concat_rows(Var a, Var b)
    {
        const auto& av = value(a);
        const auto& bv = value(b);
        Mat y(av.rows() + bv.rows(), av.cols());
        y.topRows(av.rows()) = av;
        y.bottomRows(bv.rows()) = bv;
        return push(std::move(y), [a, b](Tape& t, const Mat& g) {
            const auto ra = t.value(a).rows();
            if (t.needs(a)) t.acc(a, g.topRows(ra));
            if (t.needs(b)) t.acc(b, g.bottomRows(g.rows() - ra));
        });
    }

    /// Transposes a column of logits into a row (or back).
    Var transpose(Var a)
    {
        Mat y = value(a).transpose();
        return push(std::move(y), [a](Tape& t, const Mat& g) {
            if (t.needs(a)) t.acc(a, g.transpose());
        });
    }

    /// Masked categorical over a vector of logits (any shape, read in storage
    /// order). Output is 1x2: [log p(action), entropy]. Masked entries get
    /// probability exactly 0 and no gradient.
    Var categorical(Var logits, const std::vector<std::uint8_t>& mask, int action)
    {
        const auto& z = value(logits);
        const auto k = z.size();
        if (static_cast<Eigen::Index>(mask.size()) != k) throw Error(Errc::InvalidPrefix, "mask width mismatch");
        if (action < 0 || action >= k || !mask[static_cast<std::size_t>(action)])
            throw Error(Errc::InfeasibleAction, "action " + std::to_string(action) + " is masked");
        auto p = masked_softmax(z, mask);
        double h = 0.0;
        for (Eigen::Index i = 0; i < k; ++i)
            if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
        Mat y(1, 2);
        y(0, 0) = std::log(p[action]);
        y(0, 1) = h;
        return push(std::move(y), [logits, p, action, h](Tape& t, const Mat& g) {
            if (!t.needs(logits)) return;
            const double g_logp = g(0, 0), g_h = g(0, 1);
            const auto& zv = t.value(logits);
            Mat d = Mat::Zero(zv.rows(), zv.cols());
            for (Eigen::Index i = 0; i < d.size(); ++i) {
                const double pi = p[i];
                if (pi <= 0.0) continue;
                double v = -g_logp * pi - g_h * pi * (std::log(pi) + h);
                if (i == action) v += g_logp;
                d(i) = v;
            }
            t.acc(logits, d);
        });
    }

    /// Probabilities with masked entries exactly 0.
    static Eigen::VectorXd masked_softmax(const Mat& z, const std::vector<std::uint8_t>& mask)
    {
        const auto k = z.size();
        Eigen::VectorXd p = Eigen::VectorXd::Zero(k);
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < k; ++i)
            if (mask[static_cast<std::size_t>(i)]) mx = std::max(mx, z(i));
        if (!std::isfinite(mx)) throw Error(Errc::AllMasked, "every entry masked");
        double s = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            if (!mask[static_cast<std::size_t>(i)]) continue;
            p[i] = std::exp(z(i) - mx);
            s += p[i];
        }
        p /= s;
        return p;
    }

    /// Seeds d(loss)/d(out) for each listed output and propagates back.
    void backward(const std::vector<std::pair<Var, Mat>>& seeds)
    {
        if (seeds.empty()) return;
        Var top = 0;
        for (const auto& [v, g] : seeds) {
            top = std::max(top, v);
            acc(v, g);
        }
        for (Var v = top; v >= 0; --v) {
            auto& nd = nodes_[static_cast<std::size_t>(v)];
            if (nd.param || !nd.backward || !nd.has_grad) continue;
            Mat g = std::move(nd.grad);
            nd.has_grad = false;
            nd.backward(*this, g);
        }
    }

private:
    using Backward = std::function<void(Tape&, const Mat&)>;

    struct Node {
        Mat value;
        Mat grad;
        bool has_grad = false;
        Param* param = nullptr;
        Backward backward;
        bool requires_grad = false;
    };

    Var push(Mat v, Backward bw)
    {
        Node nd;
        nd.value = std::move(v);
        nd.requires_grad = static_cast<bool>(bw);
        nd.backward = std::move(bw);
        nodes_.push_back(std::move(nd));
        return static_cast<Var>(nodes_.size()) - 1;
    }

    [[nodiscard]] bool needs(Var v) const
    {
        const auto& nd = nodes_[static_cast<std::size_t>(v)];
        return nd.param != nullptr || nd.requires_grad;
    }

    Mat& grad_ref(Var v)
    {
        auto& nd = nodes_[static_cast<std::size_t>(v)];
        if (nd.param) {
            if (nd.param->grad.size() == 0) nd.param->zero_grad();
            return nd.param->grad;
        }
        if (!nd.has_grad) {
            nd.grad.setZero(nd.value.rows(), nd.value.cols());
            nd.has_grad = true;
        }
        return nd.grad;
    }

    template <class G>
    void acc(Var v, const G& g)
    {
        grad_ref(v) += g;
    }

    template <class G>
    void acc_rows(Var v, int r0, const G& g)
    {
        grad_ref(v).middleRows(r0, g.rows()) += g;
    }

    std::vector<Node> nodes_;
};

} // namespace astrl::ad
