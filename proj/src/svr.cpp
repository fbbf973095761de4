#include "bsf/svr.hpp"

#include "bsf/kernels.hpp"

#include <cmath>
#include <list>
#include <unordered_map>

namespace bsf::svr {

void SvrHyperparams::validate() const {
    if (!(C > 0.0)) throw InvalidArgument("svr: C must be positive");
    if (epsilon < 0.0) throw InvalidArgument("svr: epsilon must be non-negative");
    if (gamma < 0.0) throw InvalidArgument("svr: gamma must be positive (or 0 for 1/features)");
    if (!(tolerance > 0.0)) throw InvalidArgument("svr: tolerance must be positive");
}

double rbf_kernel(std::size_t dim, const double* x, const double* y, double gamma) {
    return std::exp(-gamma * kernels::ops().sqdiff_sum(dim, x, y));
}

double rbf_kernel(const Matrix& x, const Matrix& y, double gamma) {
    if (x.size() != y.size()) {
        throw ShapeError("rbf_kernel: dimension mismatch " + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()));
    }
    if (!(gamma > 0.0)) throw InvalidArgument("rbf_kernel: gamma must be positive");
    return rbf_kernel(x.size(), x.data(), y.data(), gamma);
}

namespace {

constexpr double kTau = 1e-12;
constexpr double kDiagJitter = 1e-10;

// LRU cache of base kernel matrix rows.
class KernelCache {
public:
    KernelCache(const Matrix& X, double gamma, double cache_mb)
        : X_(X), gamma_(gamma) {
        const double bytes_per_row = 8.0 * static_cast<double>(X.rows());
        max_rows_ = static_cast<std::size_t>(
            std::max(2.0, cache_mb * 1024.0 * 1024.0 / bytes_per_row));
    }

    const std::vector<double>& row(std::size_t i) {
        auto it = index_.find(i);
        if (it != index_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second.second);
            return it->second.first;
        }
        if (index_.size() >= max_rows_) {
            index_.erase(lru_.back());
            lru_.pop_back();
        }
        const std::size_t n = X_.rows();
        const std::size_t dim = X_.cols();
        std::vector<double> values(n);
        const double* xi = X_.data() + i * dim;
        for (std::size_t j = 0; j < n; ++j) {
            values[j] = rbf_kernel(dim, xi, X_.data() + j * dim, gamma_);
        }
        values[i] += kDiagJitter;
        lru_.push_front(i);
        auto [pos, inserted] =
            index_.emplace(i, std::make_pair(std::move(values), lru_.begin()));
        (void)inserted;
        return pos->second.first;
    }

private:
    const Matrix& X_;
    double gamma_;
    std::size_t max_rows_;
    std::list<std::size_t> lru_;
    std::unordered_map<std::size_t,
                       std::pair<std::vector<double>, std::list<std::size_t>::iterator>>
        index_;
};

} // namespace

// Stacked 2n-variable dual: a = [alpha; alpha*], sign y_t = +1 for t < n,
// -1 otherwise; Q_st = y_s y_t K(s mod n, t mod n); p = [eps - y; eps + y].
// Pair selection is the maximal violating pair: the first index maximizes the
// KKT violation -y_t G_t over I_up, the second minimizes it over I_low, which
// is the pair with the largest prediction-error gap.
SvrModel svr_train(const Matrix& X, const std::vector<double>& y,
                   const SvrHyperparams& hyper) {
    hyper.validate();
    const std::size_t n = X.rows();
    if (n < 2) throw InvalidArgument("svr_train: need at least 2 samples");
    if (n != y.size()) throw ShapeError("svr_train: X rows and y length differ");
    if (n > kMaxTrainingSamples) {
        throw Error("svr_train: " + std::to_string(n) + " samples exceed the " +
                    std::to_string(kMaxTrainingSamples) +
                    " cap; SVR training does not scale, use an LSTM model");
    }
    if (!all_finite(X)) throw InvalidArgument("svr_train: non-finite feature values");
    for (double v : y) {
        if (!std::isfinite(v)) throw InvalidArgument("svr_train: non-finite targets");
    }

    SvrHyperparams hp = hyper;
    if (hp.gamma == 0.0) hp.gamma = 1.0 / static_cast<double>(X.cols());

    const std::size_t m = 2 * n;
    const double C = hp.C;
    std::vector<double> a(m, 0.0);
    std::vector<double> grad(m);
    for (std::size_t i = 0; i < n; ++i) {
        grad[i] = hp.epsilon - y[i];
        grad[n + i] = hp.epsilon + y[i];
    }
    auto sign_of = [n](std::size_t t) { return t < n ? 1.0 : -1.0; };

    KernelCache cache(X, hp.gamma, hp.cache_mb);

    const std::size_t max_iter = hp.max_passes * n;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        // Maximal violating pair.
        double best_up = -std::numeric_limits<double>::infinity();
        double best_low = std::numeric_limits<double>::infinity();
        std::size_t i = m, j = m;
        for (std::size_t t = 0; t < m; ++t) {
            const double ys = sign_of(t);
            const double v = -ys * grad[t];
            const bool in_up = (ys > 0.0) ? (a[t] < C) : (a[t] > 0.0);
            const bool in_low = (ys > 0.0) ? (a[t] > 0.0) : (a[t] < C);
            if (in_up && v > best_up) {
                best_up = v;
                i = t;
            }
            if (in_low && v < best_low) {
                best_low = v;
                j = t;
            }
        }
        if (i == m || j == m || best_up - best_low < hp.tolerance) break;

        const std::size_t bi = i % n;
        const std::size_t bj = j % n;
        const double yi = sign_of(i);
        const double yj = sign_of(j);
        const std::vector<double>& Ki = cache.row(bi);
        const std::vector<double> Ki_copy = Ki; // row may be evicted by the next fetch
        const std::vector<double>& Kj = cache.row(bj);

        const double qii = Ki_copy[bi];
        const double qjj = Kj[bj];
        const double qij = yi * yj * Ki_copy[bj];

        const double old_i = a[i];
        const double old_j = a[j];

        if (yi != yj) {
            double quad = qii + qjj + 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if (diff > 0.0 && a[j] < 0.0) {
                a[j] = 0.0;
                a[i] = diff;
            } else if (diff <= 0.0 && a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if (diff > 0.0) {
                if (a[i] > C) {
                    a[i] = C;
                    a[j] = C - diff;
                }
            } else {
                if (a[j] > C) {
                    a[j] = C;
                    a[i] = C + diff;
                }
            }
        } else {
            double quad = qii + qjj - 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double total = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if (total > C) {
                if (a[i] > C) {
                    a[i] = C;
                    a[j] = total - C;
                }
                if (a[j] > C) {
                    a[j] = C;
                    a[i] = total - C;
                }
            } else {
                if (a[j] < 0.0) {
                    a[j] = 0.0;
                    a[i] = total;
                }
                if (a[i] < 0.0) {
                    a[i] = 0.0;
                    a[j] = total;
                }
            }
        }

        const double di = a[i] - old_i;
        const double dj = a[j] - old_j;
        if (di == 0.0 && dj == 0.0) break; // numerically stuck pair
        for (std::size_t t = 0; t < m; ++t) {
            const double ys = sign_of(t);
            const std::size_t bt = t % n;
            grad[t] += ys * (yi * Ki_copy[bt] * di + yj * Kj[bt] * dj);
        }
    }

    // b from the KKT stationarity of free variables (midpoint of the bound
    // interval when none are free).
    double upper = std::numeric_limits<double>::infinity();
    double lower = -std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t t = 0; t < m; ++t) {
        const double ys = sign_of(t);
        const double yg = ys * grad[t];
        if (a[t] >= C) {
            if (ys < 0.0) upper = std::min(upper, yg);
            else lower = std::max(lower, yg);
        } else if (a[t] <= 0.0) {
            if (ys > 0.0) upper = std::min(upper, yg);
            else lower = std::max(lower, yg);
        } else {
            ++free_count;
            free_sum += yg;
        }
    }
    const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count)
                                      : (upper + lower) / 2.0;

    SvrModel model;
    model.hyper = hp;
    model.b = -rho;
    std::vector<std::size_t> sv_idx;
    for (std::size_t t = 0; t < n; ++t) {
        const double beta = a[t] - a[n + t];
        if (beta != 0.0) {
            sv_idx.push_back(t);
            model.dual_coef.push_back(beta);
        }
    }
    model.support_vectors = Matrix(sv_idx.size(), X.cols());
    for (std::size_t s = 0; s < sv_idx.size(); ++s) {
        for (std::size_t c = 0; c < X.cols(); ++c) {
            model.support_vectors(s, c) = X(sv_idx[s], c);
        }
    }
    return model;
}

double svr_predict(const SvrModel& model, const Matrix& x) {
    if (x.size() != model.feature_dim() && model.dual_coef.size() > 0) {
        throw ShapeError("svr_predict: input dimension " + std::to_string(x.size()) +
                         " does not match support vectors " +
                         std::to_string(model.feature_dim()));
    }
    double acc = model.b;
    const std::size_t dim = model.feature_dim();
    for (std::size_t s = 0; s < model.dual_coef.size(); ++s) {
        acc += model.dual_coef[s] *
               rbf_kernel(dim, model.support_vectors.data() + s * dim, x.data(),
                          model.hyper.gamma);
    }
    return acc;
}

std::vector<double> svr_predict_batch(const SvrModel& model, const Matrix& X) {
    std::vector<double> out(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) {
        Matrix row(1, X.cols());
        for (std::size_t c = 0; c < X.cols(); ++c) row(0, c) = X(r, c);
        out[r] = svr_predict(model, row);
    }
    return out;
}

} // namespace bsf::svr
