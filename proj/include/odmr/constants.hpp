#pragma once

// Unit conventions used throughout the library:
//   rates        1/us
//   frequencies  MHz   (angular quantities are 2*pi times these, in rad/us)
//   powers       mW
//
// Physical constants are kept to six significant digits and live only here.

namespace odmr::constants {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline constexpr double kPlanck = 6.62607e-34;        // J s
inline constexpr double kSpeedOfLight = 2.99792e8;    // m/s
inline constexpr double kNvGyromagnetic = 1.761e11;   // 1/(s T)

inline constexpr double kHyperfineSplittingMhz = 2.2;  // 14N, MHz
inline constexpr double kSideResonanceOffsetMhz = 33.0;
inline constexpr double kSideResonanceWindowMhz = 20.0;

// Ratio between a Gaussian FWHM and its standard deviation, 2*sqrt(2 ln 2).
inline constexpr double kGaussianFwhmPerSigma = 2.35482;

inline constexpr double kMhzToHz = 1e6;
inline constexpr double kMwToW = 1e-3;
inline constexpr double kNmToM = 1e-9;

}  // namespace odmr::constants
