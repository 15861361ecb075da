#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "riccilab/flows/rdtf.hpp"

namespace riccilab {

struct RateFit {
    double exponent = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    int samples = 0;
};

/// Least-squares slope of log(y) against t.
inline RateFit fit_log_linear(const std::vector<double>& t, const std::vector<double>& y) {
    if (t.size() != y.size()) throw ParameterError("rate_fit: size mismatch");
    if (t.size() < 10) throw ParameterError("rate_fit: need at least 10 samples, got " + std::to_string(t.size()));
    const int m = static_cast<int>(t.size());
    double st = 0, sy = 0;
    std::vector<double> ly(m);
    for (int i = 0; i < m; ++i) {
        if (!(y[i] > 0)) throw ParameterError("rate_fit: quantity must be positive on the window");
        ly[i] = std::log(y[i]);
        st += t[i];
        sy += ly[i];
    }
    st /= m;
    sy /= m;
    double stt = 0, sty = 0, syy = 0;
    for (int i = 0; i < m; ++i) {
        stt += (t[i] - st) * (t[i] - st);
        sty += (t[i] - st) * (ly[i] - sy);
        syy += (ly[i] - sy) * (ly[i] - sy);
    }
    RateFit f;
    f.samples = m;
    f.exponent = stt > 0 ? sty / stt : 0.0;
    f.intercept = sy - f.exponent * st;
    f.r2 = syy > 0 ? sty * sty / (stt * syy) : 1.0;
    return f;
}

/// Quantity names: l2f_norm, hw_norm, c0_est, c2_est, or mode:<index>.
inline std::vector<double> trace_quantity(const FlowTrace& tr, const std::string& q) {
    if (q == "l2f_norm") return tr.l2f_norm;
    if (q == "hw_norm") return tr.hw_norm;
    if (q == "c0_est") return tr.c0_est;
    if (q == "c2_est") return tr.c2_est;
    if (q.rfind("mode:", 0) == 0) {
        const int i = std::stoi(q.substr(5));
        std::vector<double> v;
        for (const auto& m : tr.modes) {
            if (i < 0 || i >= m.size()) throw ParameterError("rate_fit: mode index out of range");
            v.push_back(std::abs(m(i)));
        }
        return v;
    }
    throw ParameterError("rate_fit: unknown quantity '" + q + "'");
}

inline RateFit rate_fit(const FlowTrace& tr, double t0, double t1, const std::string& quantity = "l2f_norm") {
    const auto y = trace_quantity(tr, quantity);
    std::vector<double> ts, ys;
    for (std::size_t i = 0; i < tr.size(); ++i)
        if (tr.tau[i] >= t0 - 1e-12 && tr.tau[i] <= t1 + 1e-12) {
            ts.push_back(tr.tau[i]);
            ys.push_back(y[i]);
        }
    return fit_log_linear(ts, ys);
}

}  // namespace riccilab
