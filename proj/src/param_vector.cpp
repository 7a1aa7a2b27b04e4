#include "fedcap/param_vector.hpp"

#include "fedcap/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace fedcap {

void require_same_dim(const ParamVector& a, const ParamVector& b) {
    if (a.dim() != b.dim()) {
        throw ConfigError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()));
    }
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
    require_same_dim(*this, other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
    require_same_dim(*this, other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

ParamVector& ParamVector::operator*=(double s) noexcept {
    for (double& x : values_) x *= s;
    return *this;
}

ParamVector& ParamVector::axpy(double s, const ParamVector& other) {
    require_same_dim(*this, other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * other.values_[i];
    return *this;
}

bool ParamVector::all_finite() const noexcept {
    for (double x : values_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }
ParamVector operator-(ParamVector a) { return a *= -1.0; }

double dot(const ParamVector& a, const ParamVector& b) {
    require_same_dim(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const ParamVector& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
    require_same_dim(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double distance(const ParamVector& a, const ParamVector& b) {
    return std::sqrt(squared_distance(a, b));
}

double cosine(const ParamVector& a, const ParamVector& b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'C', 'A', 'P'};

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
        throw ConfigError("truncated parameter container");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace

void write_param_vector(std::ostream& out, const ParamVector& v) {
    out.write(kMagic.data(), kMagic.size());
    out.put(static_cast<char>(kContainerVersion));
    put_le<std::uint64_t>(out, v.dim());
    for (double x : v) put_le<double>(out, x);
}

ParamVector read_param_vector(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw ConfigError("bad parameter container magic");
    }
    const int version = in.get();
    if (version != kContainerVersion) {
        throw ConfigError("unsupported parameter container version " + std::to_string(version));
    }
    const auto dim = get_le<std::uint64_t>(in);
    std::vector<double> values(dim);
    for (auto& x : values) x = get_le<double>(in);
    return ParamVector(std::move(values));
}

}  // namespace fedcap
