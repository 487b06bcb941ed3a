#include "paft/cli.hpp"

int main(int argc, char** argv) { return paft::run(argc, argv); }
