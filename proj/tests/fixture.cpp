#include <iostream>

#include "helpers.hpp"

namespace testutil {

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.train = generate(10, 200, 32, 11, "train");
    x.dev = generate(10, 10, 32, 7, "dev");
    x.zoo = load_or_train_zoo(std::filesystem::path(ADVARENA_TEST_CACHE) / "zoo", default_zoo_entries(1),
                              x.train.records,
                              [](const std::string& n) { std::cerr << "[fixture] training " << n << '\n'; });
    return x;
  }();
  return f;
}

}  // namespace testutil
