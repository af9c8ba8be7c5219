#include "telekit/cli.hpp"

int main(int argc, char** argv) {
    return telekit::cli::dispatch(argc, argv);
}
