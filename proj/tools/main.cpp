#include "discvae/cli.hpp"

int main(int argc, char** argv) { return discvae::cli::main(argc, argv); }
