#include <cstdio>
int main() { std::puts("groupcast CLI placeholder"); return 0; }
