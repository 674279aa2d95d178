private static int gcd2(int a, int b) {
    if (b == 0) return a;
    return gcd2(b, a % b);
}
