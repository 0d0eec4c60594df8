#include <gtest/gtest.h>

#include "gfen/gfen.hpp"

TEST(Gradients, FullModelMatchesCentralDifferences) {
  const auto report = gfen::verify_gradients();
  for (const auto& g : report.groups)
    std::printf("%s %.3e (%s)\n", gfen::to_string(g.group), g.relative_error, g.worst_tensor.c_str());
  EXPECT_TRUE(report.passed());
}
