package main

import "fmt"

const usage = `usage: main [n]
if n is omitted, 3 is used`

func fizz(n int) string {
	switch {
	case n%15 == 0:
		return "FizzBuzz"
	case n%3 == 0:
		return "Fizz"
	}
	return fmt.Sprint(n)
}

func main() {
	for i := 1; i <= 3; i++ {
		fmt.Println(fizz(i))
	}
	fmt.Println(usage)
}
