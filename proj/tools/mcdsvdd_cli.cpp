#include "mcdsvdd/cli/commands.hpp"

int main(int argc, char** argv) { return mcdsvdd::cli::run(argc, argv); }
