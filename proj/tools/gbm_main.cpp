#include "gbm/cli.hpp"

int main(int argc, char** argv) { return gbm::run_command(argc, argv); }
