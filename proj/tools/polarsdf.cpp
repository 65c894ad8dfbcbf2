#include <iostream>

#include "polarsdf/cli.hpp"

int main(int argc, char** argv)
{
    return polarsdf::run_cli(argc, argv, std::cout, std::cerr);
}
