#include "tcdsg/cli.hpp"

int main(int argc, char** argv) { return tcdsg::cli::run(argc, argv); }
