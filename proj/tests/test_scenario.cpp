#include <doctest.h>

#include "leoris/scenario.hpp"

TEST_SUITE("scenario") {}
