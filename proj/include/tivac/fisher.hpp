#pragma once

#include <algorithm>
#include <cmath>

#include "tivac/error.hpp"

namespace tivac {

// Fisher transform pair used everywhere in this library:
//   eta = ln{(1 + rho) / (1 - rho)},   rho = tanh(eta / 2).

// largest double strictly below 1; keeps rho_of_eta inside (-1, 1) even when
// tanh rounds to +-1 for |eta| beyond ~38
inline constexpr double kMaxAbsRho = 0x1.fffffffffffffp-1;

inline double rho_of_eta(double eta) {
    const double rho = std::tanh(0.5 * eta);
    return std::clamp(rho, -kMaxAbsRho, kMaxAbsRho);
}

inline double eta_of_rho(double rho) {
    if (!(std::abs(rho) < 1.0)) {
        fail("bad_rho", "correlation must lie strictly inside (-1, 1)");
    }
    return 2.0 * std::atanh(rho);
}

}  // namespace tivac
