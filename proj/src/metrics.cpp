#include "epinn/metrics.hpp"

#include <cmath>

#include "epinn/common.hpp"

namespace epinn {

double relative_l2(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || truth.empty())
        throw ContractError("relative_l2: size mismatch or empty input");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        num += square(pred[i] - truth[i]);
        den += square(truth[i]);
    }
    if (den == 0.0) throw ContractError("relative_l2: zero-norm truth field");
    return std::sqrt(num / den);
}

double r_squared(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || truth.empty())
        throw ContractError("r_squared: size mismatch or empty input");
    double mean = 0.0;
    for (double t : truth) mean += t;
    mean /= static_cast<double>(truth.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_res += square(pred[i] - truth[i]);
        ss_tot += square(truth[i] - mean);
    }
    if (ss_tot == 0.0) throw ContractError("r_squared: constant truth field");
    return 1.0 - ss_res / ss_tot;
}

} // namespace epinn
