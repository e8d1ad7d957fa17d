// Builds the Catch2 amalgamated implementation (with its default main) once.
#include <catch2/catch_amalgamated.cpp>
