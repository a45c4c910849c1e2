#include <doctest.h>

#include "leoris/manifold.hpp"

TEST_SUITE("manifold") {}
