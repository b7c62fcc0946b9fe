#pragma once

// Least-squares line fits for convergence studies.

#include <vector>

namespace degbill {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    int points = 0;
};

/// y ~ intercept + slope * x.  Throws DomainError with fewer than two points or constant x.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// ln y ~ intercept + slope * ln x.  Nonpositive entries throw DomainError.
LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

} // namespace degbill
