#include <algorithm>
#include <cmath>
#include <sstream>

#include "ntp/numcore.hpp"

namespace ntp {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return s.empty() ? 0 : n;
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("array shape " + shape_str(shape_) + " holds " +
                             std::to_string(shape_numel(shape_)) + " elements, got " +
                             std::to_string(data_.size()));
    }
}

Array Array::vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Array({n}, std::move(v));
}

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> d;
    d.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        d.insert(d.end(), row.begin(), row.end());
    }
    return Array({r, c}, std::move(d));
}

double Array::item() const {
    if (data_.size() != 1) throw ContractError("item() on array of shape " + shape_str(shape_));
    return data_[0];
}

Array Array::reshaped(Shape s) const {
    if (shape_numel(s) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    }
    return Array(std::move(s), data_);
}

bool Array::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

} // namespace ntp
