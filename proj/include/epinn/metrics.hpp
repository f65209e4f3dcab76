#pragma once

#include <span>

namespace epinn {

// ||pred - truth||_2 / ||truth||_2; a zero-norm truth is a contract error.
double relative_l2(std::span<const double> pred, std::span<const double> truth);

// 1 - SS_res / SS_tot; a constant truth field is a contract error.
double r_squared(std::span<const double> pred, std::span<const double> truth);

} // namespace epinn
