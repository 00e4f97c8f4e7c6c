#include <iostream>

#include "nmpz/cli.hpp"

int main(int argc, char** argv)
{
    return nmpz::run(argc, argv, std::cout, std::cerr);
}
