#pragma once

namespace stiffinfer::constants {

/// Universal gas constant, J/(kmol K).
inline constexpr double gas_constant = 8314.46261815324;
/// Standard atmosphere, Pa.
inline constexpr double one_atm = 101325.0;
/// Calorie, J.
inline constexpr double calorie = 4.184;

} // namespace stiffinfer::constants
