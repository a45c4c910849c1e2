#include <doctest.h>

#include "leoris/filter.hpp"

TEST_SUITE("filter") {}
