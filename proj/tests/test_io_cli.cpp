#include "doctest.h"
#include "opsys/io.hpp"

TEST_CASE("placeholder test_io_cli") { CHECK(true); }
