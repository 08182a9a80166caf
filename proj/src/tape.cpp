// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/tape.hpp"

#include <cmath>

namespace cogsplat::ad {

namespace {

Tape& same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw StateError("operands live on different tapes");
    return *a.tape;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()));
}

}  // namespace

Matrix softmax_rows_value(const Matrix& scores) {
    Matrix p(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const double m = scores.row(i).maxCoeff();
        Eigen::RowVectorXd e = (scores.row(i).array() - m).exp();
        p.row(i) = e / e.sum();
    }
    return p;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

Matrix gelu_value(const Matrix& x) {
    return x.unaryExpr([](double v) { return gelu_scalar(v); });
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape(t.val(a), t.val(b), "add");
    const int ia = a.id, ib = b.id;
    return t.node(t.val(a) + t.val(b), [ia, ib](Tape& t, const Matrix& g) {
        t.accum(ia, g);
        t.accum(ib, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape(t.val(a), t.val(b), "sub");
    const int ia = a.id, ib = b.id;
    return t.node(t.val(a) - t.val(b), [ia, ib](Tape& t, const Matrix& g) {
        t.accum(ia, g);
        t.accum(ib, -g);
    });
}

Var neg(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    return t.node(-t.val(a), [ia](Tape& t, const Matrix& g) { t.accum(ia, -g); });
}

Var cmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape(t.val(a), t.val(b), "cmul");
    const int ia = a.id, ib = b.id;
    return t.node(t.val(a).cwiseProduct(t.val(b)), [ia, ib](Tape& t, const Matrix& g) {
        t.accum(ia, g.cwiseProduct(t.val(ib)));
        t.accum(ib, g.cwiseProduct(t.val(ia)));
    });
}

Var cdiv(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape(t.val(a), t.val(b), "cdiv");
    const int ia = a.id, ib = b.id;
    return t.node(t.val(a).cwiseQuotient(t.val(b)), [ia, ib](Tape& t, const Matrix& g) {
        const Matrix& bv = t.val(ib);
        t.accum(ia, g.cwiseQuotient(bv));
        t.accum(ib, -g.cwiseProduct(t.val(ia)).cwiseQuotient(bv.cwiseProduct(bv)));
    });
}

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    if (t.val(a).cols() != t.val(b).rows())
        throw DimensionError("matmul: inner dimensions " + std::to_string(t.val(a).cols()) + " vs " +
                             std::to_string(t.val(b).rows()));
    const int ia = a.id, ib = b.id;
    return t.node(t.val(a) * t.val(b), [ia, ib](Tape& t, const Matrix& g) {
        t.accum(ia, g * t.val(ib).transpose());
        t.accum(ib, t.val(ia).transpose() * g);
    });
}

Var transpose(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    return t.node(t.val(a).transpose(), [ia](Tape& t, const Matrix& g) { t.accum(ia, g.transpose()); });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    const int ia = a.id;
    return t.node(t.val(a) * s, [ia, s](Tape& t, const Matrix& g) { t.accum(ia, g * s); });
}

Var add_scalar(Var a, double s) {
    Tape& t = *a.tape;
    const int ia = a.id;
    return t.node(t.val(a).array() + s, [ia](Tape& t, const Matrix& g) { t.accum(ia, g); });
}

Var add_rowvec(Var a, Var row) {
    Tape& t = same_tape(a, row);
    const Matrix& av = t.val(a);
    const Matrix& rv = t.val(row);
    if (rv.rows() != 1 || rv.cols() != av.cols()) throw DimensionError("add_rowvec: row must be 1 x cols(a)");
    const int ia = a.id, ir = row.id;
    return t.node(av.rowwise() + rv.row(0), [ia, ir](Tape& t, const Matrix& g) {
        t.accum(ia, g);
        t.accum(ir, g.colwise().sum());
    });
}

Var sum(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    Matrix out(1, 1);
    out(0, 0) = t.val(a).sum();
    return t.node(std::move(out), [ia](Tape& t, const Matrix& g) {
        t.accum(ia, Matrix::Constant(t.val(ia).rows(), t.val(ia).cols(), g(0, 0)));
    });
}

Var mean(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    const double n = static_cast<double>(t.val(a).size());
    Matrix out(1, 1);
    out(0, 0) = t.val(a).sum() / n;
    return t.node(std::move(out), [ia, n](Tape& t, const Matrix& g) {
        t.accum(ia, Matrix::Constant(t.val(ia).rows(), t.val(ia).cols(), g(0, 0) / n));
    });
}

Var square(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    return t.node(t.val(a).cwiseProduct(t.val(a)),
                  [ia](Tape& t, const Matrix& g) { t.accum(ia, 2.0 * g.cwiseProduct(t.val(ia))); });
}

Var sqrt_v(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    const int self = static_cast<int>(t.size());
    return t.node(t.val(a).cwiseSqrt(), [ia, self](Tape& t, const Matrix& g) {
        t.accum(ia, (g.array() / (2.0 * t.val(self).array())).matrix());
    });
}

Var abs_v(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    return t.node(t.val(a).cwiseAbs(), [ia](Tape& t, const Matrix& g) {
        const Matrix sign = t.val(ia).unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
        t.accum(ia, g.cwiseProduct(sign));
    });
}

Var exp_v(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    const int self = static_cast<int>(t.size());
    return t.node(t.val(a).array().exp(),
                  [ia, self](Tape& t, const Matrix& g) { t.accum(ia, g.cwiseProduct(t.val(self))); });
}

Var log_v(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    return t.node(t.val(a).array().log(),
                  [ia](Tape& t, const Matrix& g) { t.accum(ia, g.cwiseQuotient(t.val(ia))); });
}

Var sigmoid(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    const int self = static_cast<int>(t.size());
    Matrix s = t.val(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return t.node(std::move(s), [ia, self](Tape& t, const Matrix& g) {
        const Matrix& s = t.val(self);
        t.accum(ia, g.cwiseProduct(s.cwiseProduct(Matrix::Ones(s.rows(), s.cols()) - s)));
    });
}

Var tanh_v(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    const int self = static_cast<int>(t.size());
    return t.node(t.val(a).array().tanh(), [ia, self](Tape& t, const Matrix& g) {
        const Matrix& y = t.val(self);
        t.accum(ia, g.cwiseProduct(Matrix::Ones(y.rows(), y.cols()) - y.cwiseProduct(y)));
    });
}

Var gelu(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    return t.node(gelu_value(t.val(a)), [ia](Tape& t, const Matrix& g) {
        const Matrix d = t.val(ia).unaryExpr([](double x) {
            const double phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
            return phi + x * pdf;
        });
        t.accum(ia, g.cwiseProduct(d));
    });
}

Var softmax_rows(Var a) {
    Tape& t = *a.tape;
    const int ia = a.id;
    const int self = static_cast<int>(t.size());
    return t.node(softmax_rows_value(t.val(a)), [ia, self](Tape& t, const Matrix& g) {
        const Matrix& p = t.val(self);
        Matrix gx(p.rows(), p.cols());
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double dot = g.row(i).dot(p.row(i));
            gx.row(i) = p.row(i).array() * (g.row(i).array() - dot);
        }
        t.accum(ia, gx);
    });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
    Tape& t = same_tape(x, gamma);
    same_tape(gamma, beta);
    const Matrix& xv = t.val(x);
    const Eigen::Index d = xv.cols();
    if (t.val(gamma).rows() != 1 || t.val(gamma).cols() != d || t.val(beta).rows() != 1 || t.val(beta).cols() != d)
        throw DimensionError("layer_norm_rows: gamma/beta must be 1 x d");
    if (eps < 0) throw ConfigError("layer_norm_rows: eps must be >= 0");

    Matrix xhat(xv.rows(), d);
    Vector inv_std(xv.rows());
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
        const double mu = xv.row(i).mean();
        const double var = (xv.row(i).array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
    }
    Matrix y = xhat.array().rowwise() * t.val(gamma).row(0).array();
    y.rowwise() += t.val(beta).row(0);

    const int ix = x.id, ig = gamma.id, ib = beta.id;
    return t.node(std::move(y), [ix, ig, ib, xhat, inv_std](Tape& t, const Matrix& g) {
        const Eigen::RowVectorXd gam = t.val(ig).row(0);
        t.accum(ib, g.colwise().sum());
        t.accum(ig, g.cwiseProduct(xhat).colwise().sum());
        Matrix gx(g.rows(), g.cols());
        const double d = static_cast<double>(g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const Eigen::RowVectorXd gy = g.row(i).cwiseProduct(gam);
            const double m1 = gy.mean();
            const double m2 = gy.dot(xhat.row(i)) / d;
            gx.row(i) = (gy.array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
        }
        t.accum(ix, gx);
    });
}

Var normalize_rows(Var a) {
    Tape& t = *a.tape;
    const Matrix& av = t.val(a);
    Vector norms(av.rows());
    Matrix y(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
        norms(i) = av.row(i).norm();
        if (norms(i) == 0.0) throw NumericError("normalize_rows: zero row");
        y.row(i) = av.row(i) / norms(i);
    }
    const int ia = a.id;
    return t.node(std::move(y), [ia, norms](Tape& t, const Matrix& g) {
        const Matrix& av = t.val(ia);
        Matrix gx(av.rows(), av.cols());
        for (Eigen::Index i = 0; i < av.rows(); ++i) {
            const double n = norms(i);
            const double dot = g.row(i).dot(av.row(i));
            gx.row(i) = g.row(i) / n - av.row(i) * (dot / (n * n * n));
        }
        t.accum(ia, gx);
    });
}

Var concat_rows(Var a, Var b) {
    Tape& t = same_tape(a, b);
    if (t.val(a).cols() != t.val(b).cols()) throw DimensionError("concat_rows: column mismatch");
    Matrix out(t.val(a).rows() + t.val(b).rows(), t.val(a).cols());
    out << t.val(a), t.val(b);
    const int ia = a.id, ib = b.id;
    const Eigen::Index ra = t.val(a).rows();
    return t.node(std::move(out), [ia, ib, ra](Tape& t, const Matrix& g) {
        t.accum(ia, g.topRows(ra));
        t.accum(ib, g.bottomRows(g.rows() - ra));
    });
}

Var concat_cols(Var a, Var b) {
    Tape& t = same_tape(a, b);
    if (t.val(a).rows() != t.val(b).rows()) throw DimensionError("concat_cols: row mismatch");
    Matrix out(t.val(a).rows(), t.val(a).cols() + t.val(b).cols());
    out << t.val(a), t.val(b);
    const int ia = a.id, ib = b.id;
    const Eigen::Index ca = t.val(a).cols();
    return t.node(std::move(out), [ia, ib, ca](Tape& t, const Matrix& g) {
        t.accum(ia, g.leftCols(ca));
        t.accum(ib, g.rightCols(g.cols() - ca));
    });
}

Var block(Var a, Eigen::Index i, Eigen::Index j, Eigen::Index rows, Eigen::Index cols) {
    Tape& t = *a.tape;
    const Matrix& av = t.val(a);
    if (i < 0 || j < 0 || i + rows > av.rows() || j + cols > av.cols())
        throw DimensionError("block: out of range");
    const int ia = a.id;
    return t.node(av.block(i, j, rows, cols), [ia, i, j, rows, cols](Tape& t, const Matrix& g) {
        Matrix gx = Matrix::Zero(t.val(ia).rows(), t.val(ia).cols());
        gx.block(i, j, rows, cols) = g;
        t.accum(ia, gx);
    });
}

Var gather_rows(Var a, const std::vector<int>& rows) {
    Tape& t = *a.tape;
    const Matrix& av = t.val(a);
    Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= av.rows()) throw DimensionError("gather_rows: index out of range");
        out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
    }
    const int ia = a.id;
    return t.node(std::move(out), [ia, rows](Tape& t, const Matrix& g) {
        Matrix gx = Matrix::Zero(t.val(ia).rows(), t.val(ia).cols());
        for (std::size_t i = 0; i < rows.size(); ++i) gx.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
        t.accum(ia, gx);
    });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
    Tape& t = *a.tape;
    const Matrix& av = t.val(a);
    if (rows * cols != av.size()) throw DimensionError("reshape: element count mismatch");
    Matrix out = Eigen::Map<const Matrix>(av.data(), rows, cols);
    const int ia = a.id;
    return t.node(std::move(out), [ia](Tape& t, const Matrix& g) {
        const Matrix& av = t.val(ia);
        t.accum(ia, Eigen::Map<const Matrix>(g.data(), av.rows(), av.cols()));
    });
}

Var cross_entropy_logits(Var logits, const std::vector<int>& labels) {
    Tape& t = *logits.tape;
    const Matrix& lv = t.val(logits);
    if (static_cast<Eigen::Index>(labels.size()) != lv.rows())
        throw DimensionError("cross_entropy_logits: one label per row required");
    for (int y : labels)
        if (y < 0 || y >= lv.cols()) throw ConfigError("cross_entropy_logits: label outside vocabulary");

    const double k = static_cast<double>(lv.rows());
    double total = 0.0;
    for (Eigen::Index i = 0; i < lv.rows(); ++i) {
        const double m = lv.row(i).maxCoeff();
        const double lse = m + std::log((lv.row(i).array() - m).exp().sum());
        total += lse - lv(i, labels[static_cast<std::size_t>(i)]);
    }
    Matrix out(1, 1);
    out(0, 0) = total / k;
    const int il = logits.id;
    return t.node(std::move(out), [il, labels, k](Tape& t, const Matrix& g) {
        Matrix gx = softmax_rows_value(t.val(il));
        for (Eigen::Index i = 0; i < gx.rows(); ++i) gx(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        t.accum(il, gx * (g(0, 0) / k));
    });
}

namespace {

// Valid 1D convolution along columns (the contiguous image axis).
Matrix conv_cols(const Matrix& img, const Vector& kernel) {
    const Eigen::Index k = kernel.size();
    Matrix out(img.rows() - k + 1, img.cols());
    for (Eigen::Index c = 0; c < img.cols(); ++c)
        for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) = kernel.dot(img.col(c).segment(r, k));
    return out;
}

// Adjoint of conv_cols: full correlation, i.e. scatter each output cotangent
// back over the window it read.
Matrix conv_cols_adjoint(const Matrix& g, const Vector& kernel, Eigen::Index in_rows) {
    const Eigen::Index k = kernel.size();
    Matrix gx = Matrix::Zero(in_rows, g.cols());
    for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r) gx.col(c).segment(r, k) += kernel * g(r, c);
    return gx;
}

}  // namespace

Var conv_sep_valid(Var img, int height, int width, const Vector& kernel) {
    Tape& t = *img.tape;
    const Matrix& iv = t.val(img);
    const Eigen::Index k = kernel.size();
    if (iv.rows() != static_cast<Eigen::Index>(height) * width)
        throw DimensionError("conv_sep_valid: rows must equal height*width");
    if (height < k || width < k) throw DimensionError("conv_sep_valid: image smaller than kernel");
    const int oh = height - static_cast<int>(k) + 1;
    const int ow = width - static_cast<int>(k) + 1;
    const Eigen::Index channels = iv.cols();

    Matrix out(static_cast<Eigen::Index>(oh) * ow, channels);
    for (Eigen::Index c = 0; c < channels; ++c) {
        Eigen::Map<const Matrix> plane(iv.col(c).data(), height, width);
        // Vertical pass over columns, then horizontal pass over rows.
        Matrix v = conv_cols(plane, kernel);                        // oh x width
        Matrix h = conv_cols(v.transpose(), kernel).transpose();    // oh x ow
        out.col(c) = Eigen::Map<const Vector>(h.data(), h.size());
    }

    const int ii = img.id;
    return t.node(std::move(out), [ii, height, width, oh, ow, kernel](Tape& t, const Matrix& g) {
        const Eigen::Index channels = g.cols();
        Matrix gx(static_cast<Eigen::Index>(height) * width, channels);
        for (Eigen::Index c = 0; c < channels; ++c) {
            Eigen::Map<const Matrix> gplane(g.col(c).data(), oh, ow);
            Matrix gh = conv_cols_adjoint(gplane.transpose(), kernel, width).transpose();  // oh x width
            Matrix gv = conv_cols_adjoint(gh, kernel, height);                             // height x width
            gx.col(c) = Eigen::Map<const Vector>(gv.data(), gv.size());
        }
        t.accum(ii, gx);
    });
}

}  // namespace cogsplat::ad
