#include "oncoabs/cli/app.hpp"

int main(int argc, char** argv) { return oncoabs::cli::run(argc, argv); }
