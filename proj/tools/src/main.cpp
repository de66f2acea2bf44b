#include "pixfuse/cli.hpp"

int main(int argc, char** argv) { return pixfuse::cli::run(argc, argv); }
