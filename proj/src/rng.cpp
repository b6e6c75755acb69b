#include "stylepipe/rng.hpp"

#include <sstream>

namespace stylepipe {

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
}

}  // namespace stylepipe
