#include <iostream>

#include "onh/cli.hpp"

int main(int argc, char** argv) {
    return onh::dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
