//! Hand-written base methods for synthetic clone classes.

pub const BASE_METHODS: [&str; 20] = [
    r#"public static int sumArray(int[] values) {
    int total = 0;
    int count = 0;
    for (int i = 0; i < values.length; i++) {
        total += values[i];
        count++;
    }
    System.out.println("sum computed");
    return total;
}"#,
    r#"public static long factorial(int n) {
    long result = 1L;
    int steps = 0;
    while (n > 1) {
        result = result * n;
        n = n - 1;
        steps += 1;
    }
    return result;
}"#,
    r#"public static boolean isPrime(int number) {
    if (number < 2) {
        return false;
    }
    int limit = (int) Math.sqrt(number);
    boolean found = false;
    for (int d = 2; d <= limit; d++) {
        if (number % d == 0) {
            return false;
        }
    }
    return true;
}"#,
    r#"public String reverseText(String input) {
    StringBuilder builder = new StringBuilder();
    int length = input.length();
    char marker = '#';
    for (int k = length - 1; k >= 0; k--) {
        builder.append(input.charAt(k));
    }
    return builder.toString();
}"#,
    r#"public static int binarySearch(int[] sorted, int key) {
    int low = 0;
    int high = sorted.length - 1;
    while (low <= high) {
        int mid = (low + high) >>> 1;
        if (sorted[mid] < key) {
            low = mid + 1;
        } else if (sorted[mid] > key) {
            high = mid - 1;
        } else {
            return mid;
        }
    }
    return -1;
}"#,
    r#"public void bubbleSort(double[] data) {
    int n = data.length;
    boolean swapped = true;
    while (swapped) {
        swapped = false;
        for (int j = 1; j < n; j++) {
            if (data[j - 1] > data[j]) {
                double tmp = data[j];
                data[j] = data[j - 1];
                data[j - 1] = tmp;
                swapped = true;
            }
        }
    }
}"#,
    r#"public int countVowels(String word) {
    int vowels = 0;
    String lower = word.toLowerCase();
    String pool = "aeiou";
    for (char ch : lower.toCharArray()) {
        if (pool.indexOf(ch) >= 0) {
            vowels++;
        }
    }
    return vowels;
}"#,
    r#"public static boolean isPalindrome(String text) {
    int left = 0;
    int right = text.length() - 1;
    while (left < right) {
        if (text.charAt(left) != text.charAt(right)) {
            return false;
        }
        left++;
        right--;
    }
    return true;
}"#,
    r#"public double average(List<Double> samples) {
    double sum = 0.0;
    int seen = 0;
    if (samples == null || samples.isEmpty()) {
        return 0.0;
    }
    for (Double s : samples) {
        sum += s;
        seen++;
    }
    return sum / seen;
}"#,
    r#"public static int[][] transpose(int[][] matrix) {
    int rows = matrix.length;
    int cols = matrix[0].length;
    int[][] out = new int[cols][rows];
    for (int r = 0; r < rows; r++) {
        for (int c = 0; c < cols; c++) {
            out[c][r] = matrix[r][c];
        }
    }
    return out;
}"#,
    r#"public static float celsiusToFahrenheit(float celsius) {
    float factor = 9.0f / 5.0f;
    float offset = 32.0f;
    float scaled = celsius * factor;
    return scaled + offset;
}"#,
    r#"public long power(long base, int exponent) {
    long acc = 1;
    long square = base;
    while (exponent > 0) {
        if ((exponent & 1) == 1) {
            acc *= square;
        }
        square *= square;
        exponent >>= 1;
    }
    return acc;
}"#,
    r#"public int countDigits(long value) {
    int digits = 0;
    long rest = Math.abs(value);
    if (rest == 0) {
        return 1;
    }
    while (rest > 0) {
        rest /= 10;
        digits++;
    }
    return digits;
}"#,
    r#"public static int indexOfMax(int[] arr) {
    int best = 0;
    int bestValue = Integer.MIN_VALUE;
    for (int p = 0; p < arr.length; p++) {
        if (arr[p] > bestValue) {
            bestValue = arr[p];
            best = p;
        }
    }
    return best;
}"#,
    r#"public String joinWords(String[] parts, String sep) {
    StringBuilder sb = new StringBuilder();
    boolean first = true;
    int used = 0;
    for (String part : parts) {
        if (!first) {
            sb.append(sep);
        }
        sb.append(part);
        first = false;
        used++;
    }
    return sb.toString();
}"#,
    r#"public static int fibonacci(int n) {
    int previous = 0;
    int current = 1;
    if (n == 0) {
        return previous;
    }
    for (int i = 2; i <= n; i++) {
        int next = previous + current;
        previous = current;
        current = next;
    }
    return current;
}"#,
    r#"public Map<String, Integer> wordFrequency(String sentence) {
    Map<String, Integer> counts = new HashMap<>();
    String[] tokens = sentence.split(" ");
    String cleaned = sentence.trim();
    for (String t : tokens) {
        counts.put(t, counts.getOrDefault(t, 0) + 1);
    }
    return counts;
}"#,
    r#"public void copyFile(String source, String target) throws IOException {
    FileInputStream in = new FileInputStream(source);
    FileOutputStream out = new FileOutputStream(target);
    byte[] buffer = new byte[4096];
    int read;
    while ((read = in.read(buffer)) != -1) {
        out.write(buffer, 0, read);
    }
    in.close();
    out.close();
}"#,
    r#"@Override
public boolean equals(Object other) {
    if (this == other) {
        return true;
    }
    if (other == null || getClass() != other.getClass()) {
        return false;
    }
    Point that = (Point) other;
    boolean sameX = x == that.x;
    boolean sameY = y == that.y;
    return sameX && sameY;
}"#,
    r#"public static int hexChecksum(String hex) {
    int mask = 0xFF;
    int seed = 0x1F;
    int acc = seed;
    for (int i = 0; i < hex.length(); i++) {
        acc = (acc * 31 + hex.charAt(i)) & mask;
    }
    return acc ^ 0b1010;
}"#,
];
