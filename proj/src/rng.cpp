#include "fedmem/rng.hpp"

#include <cmath>
#include <limits>

#include "fedmem/error.hpp"

namespace fedmem {

std::uint64_t Rng::below(std::uint64_t n)
{
    if (n == 0) {
        fail(ErrorCode::invalid_argument, "Rng::below requires n > 0");
    }
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = m_engine();
    while (x >= limit) {
        x = m_engine();
    }
    return x % n;
}

double Rng::normal()
{
    if (m_has_spare) {
        m_has_spare = false;
        return m_spare;
    }
    // Marsaglia polar method
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    m_spare = v * f;
    m_has_spare = true;
    return u * f;
}

double Rng::gamma(double shape)
{
    if (!(shape > 0.0)) {
        fail(ErrorCode::invalid_argument, "gamma shape must be positive");
    }
    if (shape < 1.0) {
        // boost: gamma(a) = gamma(a + 1) * U^(1/a)
        double u = uniform();
        while (u == 0.0) {
            u = uniform();
        }
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

}  // namespace fedmem
