#include "envkit/ext_real.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace envkit {

ExtReal::ExtReal(double v) : value_(v) {
    if (std::isnan(v) || v < 0.0 || v == -std::numeric_limits<double>::infinity())
        throw std::invalid_argument("ExtReal: value must be nonnegative, got " + std::to_string(v));
}

ExtReal ExtReal::scaled(double s) const {
    if (!(s >= 0.0) || std::isinf(s))
        throw std::invalid_argument("ExtReal::scaled: scale must be finite and nonnegative");
    if (s == 0.0)
        return ExtReal();
    return ExtReal(Tag{}, value_ * s);
}

std::string ExtReal::to_string() const {
    if (is_infinite())
        return "inf";
    std::ostringstream os;
    os.precision(17);
    os << value_;
    return os.str();
}

std::ostream& operator<<(std::ostream& os, ExtReal x) {
    if (x.is_infinite())
        return os << "inf";
    return os << x.value();
}

} // namespace envkit
