#include <doctest.h>

#include "leoris/channel.hpp"

TEST_SUITE("channel") {}
