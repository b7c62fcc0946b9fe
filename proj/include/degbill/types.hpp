#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace degbill {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IVec = Eigen::VectorXi;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A configuration lies outside the domain of a potential, of D_E, or of a chart.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Newton / shooting / minimization failed to converge.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A linearization that must be invertible is (numerically) singular:
/// conjugate endpoints, singular Hessian, Routh nondegeneracy failure.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

/// Geometric failure: grazing incidence, infeasible arc, ambiguous projection.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// A trajectory of a singular flow entered the exclusion radius around N.
class CollisionError : public Error {
public:
    using Error::Error;
};

/// Integrator failure (step underflow, energy drift not recoverable).
class IntegrationError : public Error {
public:
    using Error::Error;
};

inline Vec stdvec_to_vec(const std::vector<double>& v)
{
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> vec_to_stdvec(const Vec& v)
{
    return {v.data(), v.data() + v.size()};
}

} // namespace degbill
