// Command-line driver: sweep runner, protocol catalog listing, self checks.
// Placeholder main until the sweep engine lands.
int main() { return 0; }
