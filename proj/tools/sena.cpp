#include "sena/cli.hpp"

int main(int argc, char** argv) {
    return sena::cli::run(argc, argv);
}
