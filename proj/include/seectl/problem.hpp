#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "seectl/errors.hpp"
#include "seectl/galerkin.hpp"
#include "seectl/grid.hpp"
#include "seectl/rng.hpp"

namespace seectl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// State/control-dependent coefficients of the controlled equation
///   dX = [A X + b(t,X,u)] dt + [B X + g(t,X,u)] dW + sum_i sigma(t,e_i,X,u) dmu~_i
/// with their Jacobians.  All callables must be Lipschitz in (x,u) with the
/// declared constant.
struct CoefficientSet {
    int state_dim = 0;
    int control_dim = 0;

    std::function<VectorXd(double, const VectorXd&, const VectorXd&)> b, g;
    std::function<VectorXd(double, int, const VectorXd&, const VectorXd&)> sigma;

    std::function<MatrixXd(double, const VectorXd&, const VectorXd&)> b_x, b_u, g_x, g_u;
    std::function<MatrixXd(double, int, const VectorXd&, const VectorXd&)> sigma_x, sigma_u;

    double lipschitz_bound = 0.0;
};

/// All coefficients vanish (linear dynamics carried by A and B alone).
inline CoefficientSet zero_coefficients(int state_dim, int control_dim) {
    CoefficientSet c;
    c.state_dim = state_dim;
    c.control_dim = control_dim;
    auto zv = [state_dim](double, const VectorXd&, const VectorXd&) {
        return VectorXd::Zero(state_dim).eval();
    };
    c.b = zv;
    c.g = zv;
    c.sigma = [state_dim](double, int, const VectorXd&, const VectorXd&) {
        return VectorXd::Zero(state_dim).eval();
    };
    auto zx = [state_dim](double, const VectorXd&, const VectorXd&) {
        return MatrixXd::Zero(state_dim, state_dim).eval();
    };
    auto zu = [state_dim, control_dim](double, const VectorXd&, const VectorXd&) {
        return MatrixXd::Zero(state_dim, control_dim).eval();
    };
    c.b_x = zx;
    c.g_x = zx;
    c.b_u = zu;
    c.g_u = zu;
    c.sigma_x = [state_dim](double, int, const VectorXd&, const VectorXd&) {
        return MatrixXd::Zero(state_dim, state_dim).eval();
    };
    c.sigma_u = [state_dim, control_dim](double, int, const VectorXd&, const VectorXd&) {
        return MatrixXd::Zero(state_dim, control_dim).eval();
    };
    c.lipschitz_bound = 0.0;
    return c;
}

/// Linear-quadratic structure: b = g = u and sigma(e_i) = Gamma_i x + u.
/// Control dimension equals state dimension.
inline CoefficientSet lq_coefficients(int state_dim, std::vector<MatrixXd> gammas,
                                      const MarkSpace& marks) {
    if (static_cast<int>(gammas.size()) != marks.size())
        throw ConfigError("lq_coefficients: one Gamma per mark required");
    CoefficientSet c = zero_coefficients(state_dim, state_dim);
    auto id = [state_dim](double, const VectorXd&, const VectorXd&) {
        return MatrixXd::Identity(state_dim, state_dim).eval();
    };
    c.b = [](double, const VectorXd&, const VectorXd& u) { return u; };
    c.g = [](double, const VectorXd&, const VectorXd& u) { return u; };
    c.b_u = id;
    c.g_u = id;
    auto gam = std::make_shared<std::vector<MatrixXd>>(std::move(gammas));
    c.sigma = [gam](double, int i, const VectorXd& x, const VectorXd& u) {
        return ((*gam)[i] * x + u).eval();
    };
    c.sigma_x = [gam](double, int i, const VectorXd&, const VectorXd&) { return (*gam)[i]; };
    c.sigma_u = [state_dim](double, int, const VectorXd&, const VectorXd&) {
        return MatrixXd::Identity(state_dim, state_dim).eval();
    };
    double s = 0.0;
    for (int i = 0; i < marks.size(); ++i)
        s += marks.intensities[i] * detail::spectral_norm((*gam)[i]) *
             detail::spectral_norm((*gam)[i]);
    c.lipschitz_bound = std::sqrt(s);
    return c;
}

/// State-independent jump sizes sigma(e_i) = s_i (pure additive jumps).
inline CoefficientSet additive_jump_coefficients(int state_dim, int control_dim,
                                                 std::vector<VectorXd> sizes) {
    CoefficientSet c = zero_coefficients(state_dim, control_dim);
    auto sz = std::make_shared<std::vector<VectorXd>>(std::move(sizes));
    c.sigma = [sz](double, int i, const VectorXd&, const VectorXd&) { return (*sz)[i]; };
    return c;
}

/// Running + terminal cost with first derivatives.  `l_uu` is the constant
/// control curvature used by closed-form Hamiltonian minimization; it must
/// be positive definite for that use.
struct CostSpec {
    std::function<double(double, const VectorXd&, const VectorXd&)> l;
    std::function<double(const VectorXd&)> terminal;
    std::function<VectorXd(double, const VectorXd&, const VectorXd&)> l_x, l_u;
    std::function<VectorXd(const VectorXd&)> terminal_x;
    MatrixXd l_uu;
};

/// l = ||x||^2 + ||u||^2, terminal = ||x||^2.
inline CostSpec quadratic_tracking_cost(int state_dim, int control_dim) {
    CostSpec c;
    c.l = [](double, const VectorXd& x, const VectorXd& u) {
        return x.squaredNorm() + u.squaredNorm();
    };
    c.terminal = [](const VectorXd& x) { return x.squaredNorm(); };
    c.l_x = [](double, const VectorXd& x, const VectorXd&) { return (2.0 * x).eval(); };
    c.l_u = [](double, const VectorXd&, const VectorXd& u) { return (2.0 * u).eval(); };
    c.terminal_x = [](const VectorXd& x) { return (2.0 * x).eval(); };
    c.l_uu = 2.0 * MatrixXd::Identity(control_dim, control_dim);
    return c;
}

/// Ensemble of discrete state paths on a common grid; values[p] holds path p
/// as an (steps+1) x N matrix, row k = X(t_k).
struct StateEnsemble {
    TimeGrid grid;
    int state_dim = 0;
    std::vector<MatrixXd> values;

    int paths() const { return static_cast<int>(values.size()); }
    VectorXd state(int path, int k) const { return values[path].row(k).transpose(); }
};

/// Admissible control process.  Three representation classes share one
/// interface: value(path, k, x).  An optional box constraint is applied on
/// evaluation, so every emitted value is admissible.
class ControlLaw {
public:
    enum class Kind { open_loop, linear_feedback, tabulated };

    static ControlLaw zero(int steps, int udim) {
        return open_loop(MatrixXd::Zero(steps, udim));
    }

    static ControlLaw constant(int steps, const VectorXd& u) {
        return open_loop(u.transpose().replicate(steps, 1));
    }

    /// One control vector per step (row k applies on [t_k, t_{k+1})).
    static ControlLaw open_loop(MatrixXd table) {
        ControlLaw c;
        c.kind_ = Kind::open_loop;
        c.steps_ = static_cast<int>(table.rows());
        c.udim_ = static_cast<int>(table.cols());
        c.open_table_ = std::move(table);
        return c;
    }

    /// u(t_k, x) = K_k x + d_k.
    static ControlLaw linear_feedback(std::vector<MatrixXd> gains, std::vector<VectorXd> offsets) {
        if (gains.empty() || gains.size() != offsets.size())
            throw ConfigError("ControlLaw: feedback needs matching gains and offsets");
        ControlLaw c;
        c.kind_ = Kind::linear_feedback;
        c.steps_ = static_cast<int>(gains.size());
        c.udim_ = static_cast<int>(gains.front().rows());
        c.gains_ = std::move(gains);
        c.offsets_ = std::move(offsets);
        return c;
    }

    /// Per-path table built by a causal rule: the builder sees only the path
    /// index, the step, and that path's state prefix up to the step.
    template <typename Builder>
    static ControlLaw tabulated(const StateEnsemble& basis, int udim, Builder&& rule) {
        ControlLaw c;
        c.kind_ = Kind::tabulated;
        c.steps_ = basis.grid.steps;
        c.udim_ = udim;
        c.table_.reserve(basis.values.size());
        for (int p = 0; p < basis.paths(); ++p) {
            MatrixXd tab(c.steps_, udim);
            for (int k = 0; k < c.steps_; ++k) {
                const auto prefix = basis.values[p].topRows(k + 1);
                tab.row(k) = VectorXd(rule(p, k, prefix)).transpose();
            }
            c.table_.push_back(std::move(tab));
        }
        return c;
    }

    ControlLaw with_box(VectorXd lo, VectorXd hi) const {
        if (lo.size() != udim_ || hi.size() != udim_ || (lo.array() > hi.array()).any())
            throw ConfigError("ControlLaw: malformed box bounds");
        ControlLaw c = *this;
        c.box_lo_ = std::move(lo);
        c.box_hi_ = std::move(hi);
        return c;
    }

    Kind kind() const { return kind_; }
    int steps() const { return steps_; }
    int udim() const { return udim_; }
    bool has_box() const { return box_lo_.has_value(); }
    const VectorXd& box_lo() const { return *box_lo_; }
    const VectorXd& box_hi() const { return *box_hi_; }

    VectorXd value(int path, int k, const VectorXd& x) const {
        if (k < 0 || k >= steps_) throw ConfigError("ControlLaw: step out of range");
        VectorXd u;
        switch (kind_) {
            case Kind::open_loop:
                u = open_table_.row(k).transpose();
                break;
            case Kind::linear_feedback:
                u = gains_[k] * x + offsets_[k];
                break;
            case Kind::tabulated:
                if (path < 0 || path >= static_cast<int>(table_.size()))
                    throw ConfigError("ControlLaw: path outside tabulated range");
                u = table_[path].row(k).transpose();
                break;
        }
        return project(u);
    }

    VectorXd project(VectorXd u) const {
        if (box_lo_)
            u = u.cwiseMax(*box_lo_).cwiseMin(*box_hi_);
        return u;
    }

    /// Parameter access for optimizer updates.
    const MatrixXd& open_table() const { return open_table_; }
    const std::vector<MatrixXd>& gains() const { return gains_; }
    const std::vector<VectorXd>& offsets() const { return offsets_; }
    const std::vector<MatrixXd>& tables() const { return table_; }

    /// Adds a per-step offset (steps x udim) to the law's additive
    /// parameters, producing a perturbed law in the same class.
    ControlLaw shifted(const MatrixXd& bump) const {
        if (bump.rows() != steps_ || bump.cols() != udim_)
            throw ConfigError("ControlLaw: bump shape must be steps x udim");
        ControlLaw c = *this;
        switch (kind_) {
            case Kind::open_loop:
                c.open_table_ += bump;
                break;
            case Kind::linear_feedback:
                for (int k = 0; k < steps_; ++k) c.offsets_[k] += bump.row(k).transpose();
                break;
            case Kind::tabulated:
                for (auto& tab : c.table_) tab += bump;
                break;
        }
        return c;
    }

    /// Convex parameter blend (1-beta)*this + beta*other within one class.
    ControlLaw blend(const ControlLaw& other, double beta) const {
        if (kind_ != other.kind_ || steps_ != other.steps_ || udim_ != other.udim_)
            throw ConfigError("ControlLaw: blend requires matching class and shape");
        ControlLaw c = *this;
        const double a = 1.0 - beta;
        switch (kind_) {
            case Kind::open_loop:
                c.open_table_ = a * open_table_ + beta * other.open_table_;
                break;
            case Kind::linear_feedback:
                for (int k = 0; k < steps_; ++k) {
                    c.gains_[k] = a * gains_[k] + beta * other.gains_[k];
                    c.offsets_[k] = a * offsets_[k] + beta * other.offsets_[k];
                }
                break;
            case Kind::tabulated:
                if (table_.size() != other.table_.size())
                    throw ConfigError("ControlLaw: blend requires matching path counts");
                for (std::size_t p = 0; p < table_.size(); ++p)
                    c.table_[p] = a * table_[p] + beta * other.table_[p];
                break;
        }
        return c;
    }

private:
    Kind kind_ = Kind::open_loop;
    int steps_ = 0;
    int udim_ = 0;
    MatrixXd open_table_;
    std::vector<MatrixXd> gains_;
    std::vector<VectorXd> offsets_;
    std::vector<MatrixXd> table_;
    std::optional<VectorXd> box_lo_, box_hi_;
};

/// A complete control problem instance.
struct ControlProblem {
    GalerkinSpace space;
    TimeGrid grid;
    MarkSpace marks;
    OperatorProcess A;
    OperatorProcess B;
    CoefficientSet coeffs;
    CostSpec cost;
    VectorXd x0;
};

/// Measured joint Lipschitz ratio of (b, g, sigma) in the state, maximized
/// over random probe pairs and grid times; the jump part is weighted by the
/// intensity measure:  (||b(x)-b(x')|| + ||g(x)-g(x')|| +
/// sqrt(sum_i nu_i ||sigma_i(x)-sigma_i(x')||^2)) / ||x-x'||_H.
inline double check_lipschitz(const CoefficientSet& coeffs, const GalerkinSpace& space,
                              const MarkSpace& marks, const TimeGrid& grid,
                              int probe_count = 128, std::uint64_t seed = 0) {
    const int N = coeffs.state_dim;
    const std::uint64_t s = rng::substream_seed(seed, 0x6C697073);
    double worst = 0.0;
    for (int p = 0; p < probe_count; ++p) {
        VectorXd x(N), y(N), u = VectorXd::Zero(coeffs.control_dim);
        for (int i = 0; i < N; ++i) {
            x[i] = rng::draw_normal(s, p, i, 0);
            y[i] = rng::draw_normal(s, p, i, 1);
        }
        for (int i = 0; i < coeffs.control_dim; ++i)
            u[i] = rng::draw_normal(s, p, i, 2);
        const int k = static_cast<int>(rng::draw_uniform(s, p, 0, 3) * (grid.steps + 1));
        const double t = grid.time(std::min(k, grid.steps));
        const double dx = (x - y).norm();
        if (dx == 0.0) continue;
        double num = (coeffs.b(t, x, u) - coeffs.b(t, y, u)).norm() +
                     (coeffs.g(t, x, u) - coeffs.g(t, y, u)).norm();
        double jump = 0.0;
        for (int i = 0; i < marks.size(); ++i)
            jump += marks.intensities[i] *
                    (coeffs.sigma(t, i, x, u) - coeffs.sigma(t, i, y, u)).squaredNorm();
        num += std::sqrt(jump);
        worst = std::max(worst, num / dx);
    }
    return worst;
}

/// Worst absolute mismatch between declared Jacobians and central finite
/// differences of the values, over random probes.  A consistency audit for
/// hand-written coefficient sets.
inline double derivative_consistency(const CoefficientSet& coeffs, const MarkSpace& marks,
                                     const TimeGrid& grid, int probe_count = 32,
                                     std::uint64_t seed = 0) {
    const int N = coeffs.state_dim;
    const int U = coeffs.control_dim;
    const double h = 1e-5;
    const std::uint64_t s = rng::substream_seed(seed, 0x64657269);
    double worst = 0.0;

    auto probe_vec = [&](int p, int dim, int channel) {
        VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v[i] = rng::draw_normal(s, p, i, channel);
        return v;
    };

    for (int p = 0; p < probe_count; ++p) {
        const VectorXd x = probe_vec(p, N, 0);
        const VectorXd u = probe_vec(p, U, 1);
        VectorXd ex = probe_vec(p, N, 2);
        VectorXd eu = probe_vec(p, U, 3);
        ex.normalize();
        eu.normalize();
        const double t =
            grid.time(std::min(static_cast<int>(rng::draw_uniform(s, p, 0, 4) * (grid.steps + 1)),
                               grid.steps));

        auto fd_x = [&](auto&& f) {
            return ((f(t, (x + h * ex).eval(), u) - f(t, (x - h * ex).eval(), u)) / (2 * h)).eval();
        };
        auto fd_u = [&](auto&& f) {
            return ((f(t, x, (u + h * eu).eval()) - f(t, x, (u - h * eu).eval())) / (2 * h)).eval();
        };

        worst = std::max(worst, (fd_x(coeffs.b) - coeffs.b_x(t, x, u) * ex).norm());
        worst = std::max(worst, (fd_u(coeffs.b) - coeffs.b_u(t, x, u) * eu).norm());
        worst = std::max(worst, (fd_x(coeffs.g) - coeffs.g_x(t, x, u) * ex).norm());
        worst = std::max(worst, (fd_u(coeffs.g) - coeffs.g_u(t, x, u) * eu).norm());
        for (int i = 0; i < marks.size(); ++i) {
            auto si = [&](double tt, const VectorXd& xx, const VectorXd& uu) {
                return coeffs.sigma(tt, i, xx, uu);
            };
            worst = std::max(worst, (fd_x(si) - coeffs.sigma_x(t, i, x, u) * ex).norm());
            worst = std::max(worst, (fd_u(si) - coeffs.sigma_u(t, i, x, u) * eu).norm());
        }
    }
    return worst;
}

}  // namespace seectl
