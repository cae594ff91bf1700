#include "spikeglm/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return spikeglm::run_command({argv + 1, argv + argc}, std::cout, std::cerr);
}
