#include "envkit/cli.hpp"

int main(int argc, char** argv) {
    return envkit::cli::run(argc, argv);
}
