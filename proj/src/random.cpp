// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/random.hpp"

#include <sstream>

namespace pseudobound {

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::deserialize(const std::string &state) {
  std::istringstream is(state);
  is >> engine_;
}

} // namespace pseudobound
