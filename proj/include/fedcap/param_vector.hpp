#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace fedcap {

/// Flat model parameters or a model update. Every model, update, and
/// aggregate in the simulator is one of these; arithmetic between two
/// vectors requires equal dimension and throws ConfigError otherwise.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
    explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
    ParamVector(std::initializer_list<double> values) : values_(values) {}

    std::size_t dim() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    const std::vector<double>& raw() const noexcept { return values_; }

    auto begin() noexcept { return values_.begin(); }
    auto end() noexcept { return values_.end(); }
    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    ParamVector& operator+=(const ParamVector& other);
    ParamVector& operator-=(const ParamVector& other);
    ParamVector& operator*=(double s) noexcept;

    /// this += s * other
    ParamVector& axpy(double s, const ParamVector& other);

    bool all_finite() const noexcept;

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    std::vector<double> values_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double s, ParamVector a);
ParamVector operator-(ParamVector a);

void require_same_dim(const ParamVector& a, const ParamVector& b);

double dot(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& a);
double squared_distance(const ParamVector& a, const ParamVector& b);
double distance(const ParamVector& a, const ParamVector& b);

/// Cosine similarity; a zero-norm operand yields 0.
double cosine(const ParamVector& a, const ParamVector& b);

// Binary container: "FCAP", version byte, u64 LE dim, dim x f64 LE.
inline constexpr unsigned char kContainerVersion = 1;

void write_param_vector(std::ostream& out, const ParamVector& v);
ParamVector read_param_vector(std::istream& in);

}  // namespace fedcap
