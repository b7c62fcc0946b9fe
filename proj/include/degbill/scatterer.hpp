#pragma once

// Scatterer N (finite point set, affine subspace, or chart immersion) and its
// tube boundary Sigma_eps = { psi(x) + eps * N(x) s : |s| = 1 }.

#include "degbill/dynamics.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace degbill {

enum class ScattererKind { PointSet, Affine, Chart };

/// Columns are orthonormal for the scatterer metric G.
struct Frames {
    Mat tangent; ///< d x m
    Mat normal;  ///< d x (d - m)
};

struct Projection {
    int component = 0;
    Vec x;                  ///< chart coordinates of the foot point
    Vec foot;               ///< psi(x), ambient
    Vec offset;             ///< q - foot (minimal image on a torus)
    double distance = 0.0;  ///< |offset|_G
    bool ambiguous = false; ///< another component is equally close
};

class Scatterer {
public:
    using Immersion = std::function<Vec(const Vec&)>;
    using ImmersionJacobian = std::function<Mat(const Vec&)>;

    /// Finite set of points.  An empty metric means the identity.
    static Scatterer point_set(const AmbientSpace& space, std::vector<Vec> points, Mat metric = Mat());
    /// psi(x) = origin + basis * x.
    static Scatterer affine(const AmbientSpace& space, Vec origin, Mat basis, Mat metric = Mat());
    /// Collision set {q_1 = q_2} of two bodies in R^b (ambient R^{2b}, coordinates (q_1, q_2)).
    static Scatterer diagonal(const AmbientSpace& space, int body_dim, Mat metric = Mat());
    /// General immersion of dimension m.  Without a Jacobian, central differences are used.
    static Scatterer chart(const AmbientSpace& space, int m, Immersion psi, ImmersionJacobian jacobian = nullptr,
                           Mat metric = Mat(), double tube_radius = 0.1);

    ScattererKind kind() const { return kind_; }
    const AmbientSpace& space() const { return space_; }
    int ambient_dim() const { return space_.dim(); }
    int dim() const { return m_; }
    int codim() const { return space_.dim() - m_; }
    int components() const { return kind_ == ScattererKind::PointSet ? static_cast<int>(points_.size()) : 1; }
    const Mat& metric() const { return metric_; }
    double tube_radius() const { return tube_radius_; }
    /// True when frames do not depend on x (points and affine subspaces).
    bool constant_frames() const { return kind_ != ScattererKind::Chart; }
    const std::vector<Vec>& points() const { return points_; }

    Vec embed(int component, const Vec& x) const;
    Mat jacobian(int component, const Vec& x) const;
    /// sum_k g_k d^2 psi_k / dx_i dx_j for an ambient covector g.
    Mat curvature(int component, const Vec& x, const Vec& g) const;
    Frames frames(int component, const Vec& x) const;
    /// psi(x) + eps * normal(x) * s.
    Vec tube_point(int component, const Vec& x, const Vec& s, double eps) const;
    /// Nearest point of N.  x0 seeds the Gauss-Newton iteration for charts.
    Projection nearest(const Vec& q, const Vec& x0 = Vec()) const;

private:
    Scatterer(const AmbientSpace& space) : space_(space) {}
    void check_component(int component) const;

    ScattererKind kind_ = ScattererKind::PointSet;
    AmbientSpace space_;
    int m_ = 0;
    Mat metric_;
    double tube_radius_ = 0.0;
    std::vector<Vec> points_;
    Vec origin_;
    Mat basis_;
    Immersion psi_;
    ImmersionJacobian jac_;
    Frames const_frames_;
};

/// Gram-Schmidt in the metric G: tangent from the Jacobian columns, normal from
/// the ambient basis e_1..e_d taken in order.  Throws DegeneracyError on rank loss.
Frames metric_frames(const Mat& jacobian, const Mat& metric);

} // namespace degbill
