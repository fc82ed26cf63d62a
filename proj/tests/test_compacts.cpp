#include "doctest.h"
#include "opsys/io.hpp"

TEST_CASE("placeholder test_compacts") { CHECK(true); }
