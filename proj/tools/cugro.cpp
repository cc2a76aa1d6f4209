#include "cugro/cli.hpp"

int main(int argc, char** argv) {
    return cugro::cli_main(argc, argv);
}
