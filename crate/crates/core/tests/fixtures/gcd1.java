public long gcd1(long a, long b) {
    // iterative Euclid
    while (b > 0) {
        long temp = b;
        b = a % b;
        a = temp;
    }
    return a;
}
