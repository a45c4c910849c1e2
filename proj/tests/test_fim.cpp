#include <doctest.h>

#include "leoris/fim.hpp"

TEST_SUITE("fim") {}
