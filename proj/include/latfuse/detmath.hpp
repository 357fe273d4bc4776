#pragma once

#include <cmath>

namespace latfuse {

// sin(2*pi*t) evaluated with only +,-,*,/ and round(), all of which are
// correctly rounded under IEEE-754. libm transcendentals differ across
// platforms; this one does not, which keeps generated latents bit-identical
// everywhere. Argument reduction happens in turns, where it is cheap and
// exact-enough: u = t - round(t) lands in [-0.5, 0.5] with no catastrophic
// cancellation for the modest |t| used by the synth module.
//
// Polynomials are the classic Cephes sin/cos minimax fits on [-pi/4, pi/4]
// (Moshier, public domain), good to ~1 ulp on the reduced range.
inline double sin_turns(double t) {
    constexpr double kPiOver2 = 1.57079632679489661923;
    const double u = t - std::round(t);   // [-0.5, 0.5]
    const double v = 4.0 * u;             // quarter turns, [-2, 2]
    const double k = std::round(v);       // {-2,-1,0,1,2}
    const double r = (v - k) * kPiOver2;  // quarter-turns to radians, [-pi/4, pi/4]
    const double z = r * r;

    const double sin_poly =
        r + r * z *
                (-1.66666666666666307295e-1 +
                 z * (8.33333333332211858878e-3 +
                      z * (-1.98412698295895385996e-4 +
                           z * (2.75573136213857245213e-6 +
                                z * (-2.50507477628578072866e-8 +
                                     z * 1.58962301576546568060e-10)))));
    const double cos_poly =
        1.0 - 0.5 * z +
        z * z *
            (4.16666666666665929218e-2 +
             z * (-1.38888888888730564116e-3 +
                  z * (2.48015872888517179954e-5 +
                       z * (-2.75573141792967388112e-7 +
                            z * (2.08757008419747316778e-9 +
                                 z * -1.13585365213876817300e-11)))));

    const int ki = static_cast<int>(k);
    switch (ki) {
        case 0: return sin_poly;
        case 1: return cos_poly;
        case -1: return -cos_poly;
        default: return -sin_poly;  // k == +/-2
    }
}

}  // namespace latfuse
