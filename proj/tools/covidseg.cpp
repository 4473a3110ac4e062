#include "covidseg/cli/cli.hpp"

int main(int argc, char** argv) { return covidseg::dispatch(argc, argv); }
