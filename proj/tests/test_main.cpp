#include <gtest/gtest.h>

#include "nstab/runtime.hpp"

int main(int argc, char** argv) {
  nstab::tune_allocator();
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
