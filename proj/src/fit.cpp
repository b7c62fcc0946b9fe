#include "degbill/fit.hpp"

#include "degbill/types.hpp"

#include <cmath>

namespace degbill {

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw DomainError("linear_fit: need at least two (x, y) pairs");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0)
        throw DomainError("linear_fit: constant abscissa");
    LinearFit f;
    f.points = static_cast<int>(x.size());
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        ss_res += r * r;
    }
    f.r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
    return f;
}

LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y)
{
    std::vector<double> lx, ly;
    for (size_t i = 0; i < x.size() && i < y.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw DomainError("loglog_fit: entries must be positive");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return linear_fit(lx, ly);
}

} // namespace degbill
