#include "cli.hpp"

int main(int argc, char** argv) { return biascorrect::cli::run(argc, argv); }
