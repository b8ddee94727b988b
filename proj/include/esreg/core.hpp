#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <esreg/errors.hpp>

namespace esreg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Tail { lower, upper };

inline const char* to_string(Tail t) { return t == Tail::lower ? "lower" : "upper"; }

/// A quantile / expected-shortfall level tau in (0,1) together with the tail it refers to.
class QuantileLevel {
public:
    explicit QuantileLevel(double tau, Tail tail = Tail::lower) : tau_(tau), tail_(tail) {
        if (!(tau > 0.0 && tau < 1.0)) {
            throw InputError("quantile level tau must lie in (0,1), got " + std::to_string(tau));
        }
    }

    double tau() const { return tau_; }
    Tail tail() const { return tail_; }

    bool operator==(const QuantileLevel&) const = default;

private:
    double tau_;
    Tail tail_;
};

enum class CoefRole { quantile, es, projection };

struct CoefVector {
    Vector values;
    CoefRole role = CoefRole::es;

    Index size() const { return values.size(); }
    double operator[](Index i) const { return values[i]; }
};

/// Response vector and dense design. When has_intercept is set, column 0 is the constant one.
/// Immutable after construction; safe to share across concurrent replications.
class Dataset {
public:
    Dataset(Vector y, Matrix X, bool has_intercept, std::vector<std::string> column_names = {})
        : y_(std::move(y)), X_(std::move(X)), has_intercept_(has_intercept),
          names_(std::move(column_names)) {
        if (X_.rows() < 2 || X_.cols() < 1) {
            throw InputError("dataset needs n >= 2 rows and p >= 1 columns");
        }
        if (y_.size() != X_.rows()) {
            throw InputError("response length " + std::to_string(y_.size()) +
                             " does not match design rows " + std::to_string(X_.rows()));
        }
        if (!y_.allFinite()) throw InputError("response contains missing or non-finite values");
        if (!X_.allFinite()) throw InputError("design contains missing or non-finite values");
        if (has_intercept_ && (X_.col(0).array() != 1.0).any()) {
            throw InputError("intercept column (column 0) must be exactly all ones");
        }
        if (names_.empty()) {
            names_.reserve(static_cast<std::size_t>(X_.cols()));
            for (Index j = 0; j < X_.cols(); ++j) {
                names_.push_back(has_intercept_ && j == 0 ? "(Intercept)" : "x" + std::to_string(j));
            }
        } else if (static_cast<Index>(names_.size()) != X_.cols()) {
            throw InputError("column_names length does not match design columns");
        }
    }

    const Vector& y() const { return y_; }
    const Matrix& X() const { return X_; }
    bool has_intercept() const { return has_intercept_; }
    const std::vector<std::string>& column_names() const { return names_; }
    Index n() const { return X_.rows(); }
    Index p() const { return X_.cols(); }

    /// Number of columns subject to penalization (everything but the intercept).
    Index penalized_count() const { return p() - (has_intercept_ ? 1 : 0); }

    /// Column index of a named column, or -1.
    Index find_column(const std::string& name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        return it == names_.end() ? -1 : static_cast<Index>(it - names_.begin());
    }

    Dataset with_response(Vector y) const { return Dataset(std::move(y), X_, has_intercept_, names_); }

    Dataset subset_rows(const std::vector<Index>& rows) const {
        Vector ys(static_cast<Index>(rows.size()));
        Matrix Xs(static_cast<Index>(rows.size()), X_.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            ys[static_cast<Index>(r)] = y_[rows[r]];
            Xs.row(static_cast<Index>(r)) = X_.row(rows[r]);
        }
        return Dataset(std::move(ys), std::move(Xs), has_intercept_, names_);
    }

private:
    Vector y_;
    Matrix X_;
    bool has_intercept_;
    std::vector<std::string> names_;
};

/// Per-coordinate penalty weights: 0 on the intercept, 1 elsewhere.
inline Vector default_penalty_weights(Index p, bool has_intercept) {
    Vector w = Vector::Ones(p);
    if (has_intercept) w[0] = 0.0;
    return w;
}

inline Vector default_penalty_weights(const Dataset& ds) {
    return default_penalty_weights(ds.p(), ds.has_intercept());
}

/// rho_tau(u) = {tau - 1(u<0)} u.
inline double check_loss(double tau, double u) { return u >= 0.0 ? tau * u : (tau - 1.0) * u; }
inline double check_loss(const QuantileLevel& level, double u) { return check_loss(level.tau(), u); }

/// Z(beta) = (y - x'beta) 1(y <= x'beta) + tau x'beta. Ties fire the indicator.
inline double adjusted_response(double y, double xb, double tau) {
    return (y <= xb ? (y - xb) : 0.0) + tau * xb;
}
inline double adjusted_response(double y, double xb, const QuantileLevel& level) {
    return adjusted_response(y, xb, level.tau());
}

inline Vector adjusted_responses(const Vector& y, const Vector& fitted, double tau) {
    Vector z(y.size());
    for (Index i = 0; i < y.size(); ++i) z[i] = adjusted_response(y[i], fitted[i], tau);
    return z;
}

inline double mean_check_loss(const Vector& residuals, double tau) {
    double s = 0.0;
    for (Index i = 0; i < residuals.size(); ++i) s += check_loss(tau, residuals[i]);
    return s / static_cast<double>(residuals.size());
}

/// Indices of nonzero non-intercept coordinates.
inline std::vector<Index> support_of(const Vector& coef, bool has_intercept) {
    std::vector<Index> s;
    for (Index j = has_intercept ? 1 : 0; j < coef.size(); ++j) {
        if (coef[j] != 0.0) s.push_back(j);
    }
    return s;
}

struct StandardizationInfo {
    Vector center;
    Vector scale;
    bool applied = false;
    bool has_intercept = false;
};

/// Centers (when an intercept is present) and scales every non-intercept column to sample sd 1.
inline std::pair<Dataset, StandardizationInfo> standardize(const Dataset& ds) {
    const Index n = ds.n();
    const Index p = ds.p();
    StandardizationInfo info;
    info.center = Vector::Zero(p);
    info.scale = Vector::Ones(p);
    info.applied = true;
    info.has_intercept = ds.has_intercept();

    Matrix Xs = ds.X();
    for (Index j = ds.has_intercept() ? 1 : 0; j < p; ++j) {
        const double mean = ds.X().col(j).mean();
        const double sd = std::sqrt((ds.X().col(j).array() - mean).square().sum() / static_cast<double>(n - 1));
        if (!(sd > 0.0) || sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
            throw InputError("degenerate column '" + ds.column_names()[static_cast<std::size_t>(j)] +
                             "': zero sample standard deviation");
        }
        const double c = ds.has_intercept() ? mean : 0.0;
        info.center[j] = c;
        info.scale[j] = sd;
        Xs.col(j) = (ds.X().col(j).array() - c) / sd;
    }
    return {Dataset(ds.y(), std::move(Xs), ds.has_intercept(), ds.column_names()), std::move(info)};
}

inline Dataset destandardize(const Dataset& ds, const StandardizationInfo& info) {
    if (!info.applied) return ds;
    if (info.center.size() != ds.p()) throw InputError("standardization info does not match dataset");
    Matrix X = ds.X();
    for (Index j = info.has_intercept ? 1 : 0; j < ds.p(); ++j) {
        X.col(j) = X.col(j).array() * info.scale[j] + info.center[j];
    }
    return Dataset(ds.y(), std::move(X), ds.has_intercept(), ds.column_names());
}

/// Maps coefficients fitted on a standardized design back to the original column scale so that
/// fitted values are unchanged.
inline CoefVector destandardize_coefs(const CoefVector& coefs, const StandardizationInfo& info) {
    if (!info.applied) throw InputError("standardization info not applied");
    if (coefs.size() != info.scale.size()) {
        throw InputError("coefficient length " + std::to_string(coefs.size()) +
                         " does not match standardization length " + std::to_string(info.scale.size()));
    }
    CoefVector out = coefs;
    const Index first = info.has_intercept ? 1 : 0;
    double shift = 0.0;
    for (Index j = first; j < coefs.size(); ++j) {
        out.values[j] = coefs.values[j] / info.scale[j];
        shift += out.values[j] * info.center[j];
    }
    if (info.has_intercept) out.values[0] = coefs.values[0] - shift;
    return out;
}

/// Inverse of destandardize_coefs.
inline CoefVector standardize_coefs(const CoefVector& coefs, const StandardizationInfo& info) {
    if (!info.applied) return coefs;
    CoefVector out = coefs;
    const Index first = info.has_intercept ? 1 : 0;
    double shift = 0.0;
    for (Index j = first; j < coefs.size(); ++j) {
        out.values[j] = coefs.values[j] * info.scale[j];
        shift += coefs.values[j] * info.center[j];
    }
    if (info.has_intercept) out.values[0] = coefs.values[0] + shift;
    return out;
}

// Column/entry removal helpers for the j-th coordinate split X = [X_j, X_{-j}].

inline Matrix drop_column(const Matrix& X, Index j) {
    Matrix out(X.rows(), X.cols() - 1);
    if (j > 0) out.leftCols(j) = X.leftCols(j);
    if (j < X.cols() - 1) out.rightCols(X.cols() - 1 - j) = X.rightCols(X.cols() - 1 - j);
    return out;
}

inline Vector drop_entry(const Vector& v, Index j) {
    Vector out(v.size() - 1);
    if (j > 0) out.head(j) = v.head(j);
    if (j < v.size() - 1) out.tail(v.size() - 1 - j) = v.tail(v.size() - 1 - j);
    return out;
}

inline Vector insert_entry(const Vector& v, Index j, double value) {
    Vector out(v.size() + 1);
    if (j > 0) out.head(j) = v.head(j);
    out[j] = value;
    if (j < v.size()) out.tail(v.size() - j) = v.tail(v.size() - j);
    return out;
}

inline Matrix select_columns(const Matrix& X, const std::vector<Index>& cols) {
    Matrix out(X.rows(), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = X.col(cols[k]);
    return out;
}

} // namespace esreg
