#include <doctest.h>

#include "leoris/geometry.hpp"

TEST_SUITE("geometry") {}
