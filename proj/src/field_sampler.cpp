#include "homlab/field_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace homlab {

namespace {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t cell_bits(std::uint64_t seed, std::uint64_t index, int i, int j) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ index);
    h = mix64(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32 |
                   static_cast<std::uint32_t>(j)));
    return h;
}

}  // namespace

FieldLaw FieldLaw::checkerboard(double alpha, double beta) {
    FieldLaw law;
    law.kind = LawKind::Checkerboard;
    law.alpha = alpha;
    law.beta = beta;
    law.eta = 0.5;
    return law;
}

FieldLaw FieldLaw::perturbed_periodic(const Mat2& a_per, const Mat2& c_per, double eta) {
    FieldLaw law;
    law.kind = LawKind::PerturbedPeriodic;
    law.a_per = a_per;
    law.c_per = c_per;
    law.eta = eta;
    return law;
}

double FieldLaw::probability() const { return kind == LawKind::Checkerboard ? 0.5 : eta; }

Mat2 FieldLaw::phase(int draw) const {
    if (kind == LawKind::Checkerboard) return (draw ? beta : alpha) * Mat2::Identity();
    return draw ? Mat2(a_per + c_per) : a_per;
}

void FieldLaw::validate() const {
    if (kind == LawKind::Checkerboard) {
        if (!(alpha > 0.0) || !(beta > 0.0))
            throw ParameterError("checkerboard conductivities must be positive (alpha, beta)");
        return;
    }
    if (!(eta >= 0.0 && eta <= 1.0)) throw ParameterError("eta must lie in [0, 1]");
    if (!is_spd(a_per)) throw EllipticityError("a_per is not symmetric positive definite");
    if (!is_spd(a_per + c_per)) throw EllipticityError("a_per + c_per is not symmetric positive definite");
}

std::string FieldLaw::describe() const {
    std::ostringstream os;
    os.precision(17);
    if (kind == LawKind::Checkerboard) {
        os << "checkerboard(alpha=" << alpha << ",beta=" << beta << ")";
    } else {
        os << "perturbed(a_per=[" << a_per(0, 0) << "," << a_per(0, 1) << "," << a_per(1, 1)
           << "],c_per=[" << c_per(0, 0) << "," << c_per(0, 1) << "," << c_per(1, 1) << "],eta=" << eta
           << ")";
    }
    return os.str();
}

std::size_t Configuration::ones() const {
    return static_cast<std::size_t>(std::count(draws.begin(), draws.end(), std::uint8_t{1}));
}

CoefficientField CoefficientField::constant(int n, const Mat2& value) {
    CoefficientField f;
    f.n = n;
    f.cells.assign(static_cast<std::size_t>(n) * n, value);
    return f;
}

double cell_uniform(std::uint64_t seed, std::uint64_t index, int i, int j) {
    return static_cast<double>(cell_bits(seed, index, i, j) >> 11) * 0x1.0p-53;
}

std::uint64_t sample_key(std::uint64_t seed, std::uint64_t index, std::uint64_t salt) {
    return mix64(mix64(mix64(seed) ^ index) ^ salt);
}

Configuration sample_configuration(const FieldLaw& law, int n, std::uint64_t seed, std::uint64_t index) {
    law.validate();
    if (n < 1) throw ParameterError("configuration size n must be >= 1");
    Configuration c;
    c.n = n;
    c.seed = seed;
    c.index = index;
    c.p = law.probability();
    c.sampled = true;
    c.draws.resize(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            c.draws[static_cast<std::size_t>(j) * n + i] = cell_uniform(seed, index, i, j) < c.p ? 1 : 0;
    return c;
}

Configuration antithetic_transform(const Configuration& c) {
    Configuration t = c;
    t.antithetic = !c.antithetic;
    if (!c.sampled || c.p == 0.5) {
        for (auto& d : t.draws) d = d ? 0 : 1;
        return t;
    }
    // Draws of the flipped configuration threshold 1 - U instead of U.
    for (int j = 0; j < c.n; ++j)
        for (int i = 0; i < c.n; ++i) {
            double u = cell_uniform(c.seed, c.index, i, j);
            if (t.antithetic) u = 1.0 - u;
            t.draws[static_cast<std::size_t>(j) * c.n + i] = u < c.p ? 1 : 0;
        }
    return t;
}

CoefficientField realize_field(const FieldLaw& law, const Configuration& c) {
    law.validate();
    if (static_cast<std::size_t>(c.n) * c.n != c.draws.size())
        throw DimensionError("configuration draw count does not match n*n");
    const Mat2 zero = law.phase(0);
    const Mat2 one = law.phase(1);
    CoefficientField f;
    f.n = c.n;
    f.cells.resize(c.draws.size());
    for (std::size_t k = 0; k < c.draws.size(); ++k) {
        if (c.draws[k] > 1) throw ParameterError("configuration draws must be 0 or 1");
        f.cells[k] = c.draws[k] ? one : zero;
    }
    return f;
}

Configuration sqs1_exact_sample(int n, std::uint64_t seed, std::uint64_t index, double p) {
    if (n < 1) throw ParameterError("configuration size n must be >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("probability must lie in [0, 1]");
    const double target = p * n * n;
    const double count = std::round(target);
    if (std::abs(target - count) > 1e-9)
        throw InfeasibleError("p * n^2 is not an integer; exact first-moment balance is infeasible");

    Configuration c;
    c.n = n;
    c.seed = seed;
    c.index = index;
    c.p = p;
    c.draws.assign(static_cast<std::size_t>(n) * n, 0);
    std::fill_n(c.draws.begin(), static_cast<std::size_t>(count), std::uint8_t{1});
    std::mt19937_64 engine(sample_key(seed, index, 0x5155u));
    std::shuffle(c.draws.begin(), c.draws.end(), engine);
    return c;
}

}  // namespace homlab
