class Greeter {
    static String greet(String name) {
        return "hi " + name;
    }

    public static void main(String[] args) {
        System.out.println(greet("x"));
    }
}
