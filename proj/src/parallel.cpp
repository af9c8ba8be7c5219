#include "telekit/parallel.hpp"

namespace telekit {

std::size_t default_workers() {
    const auto n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

}  // namespace telekit
